//! Deterministic simulation of data collaboration analysis.
//!
//! Parties holding row/column blocks of a partitioned dataset share only
//! dimensionality-reduced intermediate representations; a master aligns
//! them through a jointly generated anchor dataset, trains a central
//! model, and returns anchor pseudo-labels from which every party
//! distills its own interpretable model. This crate implements the whole
//! pipeline as an in-process protocol plus the anchor constructions
//! (random-range, truncated-SVD, SMOTE-style interpolation, raw), the
//! evaluation metrics, and a config-driven multi-trial experiment runner.
//!
//! Everything is seeded: identical (config, seed) pairs reproduce
//! byte-identical reports.

pub mod anchor;
pub mod config;
pub mod datasets;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod matrix;
pub mod metrics;
pub mod models;
pub mod protocol;
pub mod rng;

pub use error::{Error, Result};
pub use matrix::DataMatrix;
