//! Principal component analysis used as the per-party reduction map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::svd::truncated_svd;
use crate::matrix::DataMatrix;

/// A fitted linear reduction: subtract `mean`, project onto `components`.
///
/// `components` is `cols x target_dim` with orthonormal columns (the top
/// principal directions of the training data).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaMap {
    pub mean: Vec<f64>,
    pub components: DataMatrix,
    /// Variance captured by each component (eigenvalues of the sample
    /// covariance), nonincreasing.
    pub explained_variance: Vec<f64>,
}

impl PcaMap {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.cols()
    }
}

/// Fit the top-`target_dim` principal directions of `a`.
///
/// Centers but does not scale; feature scaling is a dataset concern.
/// Requires a strict reduction (`target_dim < cols`) and at least two
/// rows; all-constant input is rejected as degenerate.
pub fn fit_pca(a: &DataMatrix, target_dim: usize) -> Result<PcaMap> {
    if target_dim == 0 || target_dim >= a.cols() {
        return Err(Error::InvalidParam(format!(
            "PCA target dim {} must be in 1..{} (strict reduction)",
            target_dim,
            a.cols()
        )));
    }
    if a.rows() < 2 {
        return Err(Error::InvalidParam(
            "PCA needs at least two rows to estimate variance".into(),
        ));
    }
    let mean = a.col_means();
    let mut centered = a.clone();
    for i in 0..a.rows() {
        for (j, m) in mean.iter().enumerate() {
            centered.set(i, j, a.get(i, j) - m);
        }
    }
    if centered.frobenius_norm() == 0.0 {
        return Err(Error::DegenerateInput(
            "zero-variance input: no principal directions".into(),
        ));
    }
    let svd = truncated_svd(&centered, target_dim)?;
    let n1 = (a.rows() - 1) as f64;
    let explained_variance = svd
        .singular_values
        .iter()
        .map(|s| s * s / n1)
        .collect();
    Ok(PcaMap {
        mean,
        components: svd.vt.transpose(),
        explained_variance,
    })
}

/// Project `a` through a fitted map: `(a - mean) * components`.
pub fn apply_pca(map: &PcaMap, a: &DataMatrix) -> Result<DataMatrix> {
    if a.cols() != map.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "PCA map expects {} columns, got {}",
            map.input_dim(),
            a.cols()
        )));
    }
    let mut centered = a.clone();
    for i in 0..a.rows() {
        for (j, m) in map.mean.iter().enumerate() {
            centered.set(i, j, a.get(i, j) - m);
        }
    }
    centered.matmul(&map.components)
}
