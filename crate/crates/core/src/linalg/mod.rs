//! Dense numerical kernels: SVD, PCA, ridge/least-squares solves,
//! nearest neighbors and minimum-cost assignment.
//!
//! All operations are pure functions of their inputs and deterministic
//! per input, so values may be shared freely across threads.

mod assignment;
mod knn;
mod pca;
mod ridge;
mod svd;

pub use assignment::min_cost_assignment;
pub use knn::knn_indices;
pub use pca::{apply_pca, fit_pca, PcaMap};
pub use ridge::{lstsq, ridge_solve};
pub use svd::{full_svd, truncated_svd, TruncatedSvd};
