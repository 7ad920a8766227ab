//! Dense row-major matrix of finite `f64` values.
//!
//! `DataMatrix` is the universal carrier for datasets, anchor data,
//! intermediate representations and collaboration representations.
//! Constructors reject non-finite entries, so every downstream kernel
//! may assume finite input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense numeric table with optional per-column feature names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    col_names: Option<Vec<String>>,
}

impl DataMatrix {
    /// Build from a row-major value buffer. Fails on `rows*cols` mismatch
    /// or any non-finite entry.
    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values for a {}x{} matrix, got {}",
                rows * cols,
                rows,
                cols,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "non-finite value at flat index {pos}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            values,
            col_names: None,
        })
    }

    /// Build from a slice of equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::ShapeMismatch("ragged row lengths".into()));
        }
        let mut values = Vec::with_capacity(nrows * ncols);
        for r in rows {
            values.extend_from_slice(r);
        }
        Self::from_vec(nrows, ncols, values)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
            col_names: None,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Attach column names; length must equal `cols`.
    pub fn with_col_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.cols {
            return Err(Error::ShapeMismatch(format!(
                "{} column names for {} columns",
                names.len(),
                self.cols
            )));
        }
        self.col_names = Some(names);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn col_names(&self) -> Option<&[String]> {
        self.col_names.as_deref()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.values[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// New matrix keeping the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::InvalidParam(format!("row index {i} out of range")));
            }
            values.extend_from_slice(self.row(i));
        }
        let mut out = Self::from_vec(indices.len(), self.cols, values)?;
        out.col_names = self.col_names.clone();
        Ok(out)
    }

    /// New matrix keeping the given columns, in the given order.
    pub fn select_cols(&self, indices: &[usize]) -> Result<Self> {
        for &j in indices {
            if j >= self.cols {
                return Err(Error::InvalidParam(format!(
                    "column index {j} out of range"
                )));
            }
        }
        let mut values = Vec::with_capacity(self.rows * indices.len());
        for i in 0..self.rows {
            let row = self.row(i);
            values.extend(indices.iter().map(|&j| row[j]));
        }
        let mut out = Self::from_vec(self.rows, indices.len(), values)?;
        if let Some(names) = &self.col_names {
            out.col_names = Some(indices.iter().map(|&j| names[j].clone()).collect());
        }
        Ok(out)
    }

    /// Horizontal concatenation; all blocks must share the row count.
    pub fn hstack(blocks: &[&DataMatrix]) -> Result<Self> {
        let rows = blocks
            .first()
            .ok_or_else(|| Error::InvalidParam("hstack of zero blocks".into()))?
            .rows;
        if blocks.iter().any(|b| b.rows != rows) {
            return Err(Error::ShapeMismatch("hstack row counts differ".into()));
        }
        let cols: usize = blocks.iter().map(|b| b.cols).sum();
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for b in blocks {
                values.extend_from_slice(b.row(i));
            }
        }
        Self::from_vec(rows, cols, values)
    }

    /// Vertical concatenation; all blocks must share the column count.
    pub fn vstack(blocks: &[&DataMatrix]) -> Result<Self> {
        let cols = blocks
            .first()
            .ok_or_else(|| Error::InvalidParam("vstack of zero blocks".into()))?
            .cols;
        if blocks.iter().any(|b| b.cols != cols) {
            return Err(Error::ShapeMismatch("vstack column counts differ".into()));
        }
        let rows: usize = blocks.iter().map(|b| b.rows).sum();
        let mut values = Vec::with_capacity(rows * cols);
        for b in blocks {
            values.extend_from_slice(&b.values);
        }
        Self::from_vec(rows, cols, values)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &DataMatrix) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let lhs_row = self.row(i);
            for (k, &l) in lhs_row.iter().enumerate() {
                if l == 0.0 {
                    continue;
                }
                let rhs_row = rhs.row(k);
                let out_row = &mut out.values[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &r) in out_row.iter_mut().zip(rhs_row) {
                    *o += l * r;
                }
            }
        }
        Ok(out)
    }

    /// Elementwise difference.
    pub fn sub(&self, rhs: &DataMatrix) -> Result<Self> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::ShapeMismatch("sub on differing shapes".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&rhs.values)
            .map(|(a, b)| a - b)
            .collect();
        Self::from_vec(self.rows, self.cols, values)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Per-column means.
    pub fn col_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (m, v) in means.iter_mut().zip(self.row(i)) {
                *m += v;
            }
        }
        let n = self.rows.max(1) as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// Per-column sample variances (denominator `rows - 1`, 0 for a single row).
    pub fn col_variances(&self) -> Vec<f64> {
        if self.rows < 2 {
            return vec![0.0; self.cols];
        }
        let means = self.col_means();
        let mut vars = vec![0.0; self.cols];
        for i in 0..self.rows {
            for ((v, &m), x) in vars.iter_mut().zip(&means).zip(self.row(i)) {
                let d = x - m;
                *v += d * d;
            }
        }
        let n1 = (self.rows - 1) as f64;
        vars.iter_mut().for_each(|v| *v /= n1);
        vars
    }

    /// Per-column (min, max) pairs.
    pub fn col_bounds(&self) -> Vec<(f64, f64)> {
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); self.cols];
        for i in 0..self.rows {
            for (b, &x) in bounds.iter_mut().zip(self.row(i)) {
                b.0 = b.0.min(x);
                b.1 = b.1.max(x);
            }
        }
        bounds
    }
}

/// Euclidean distance between two equally long slices.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
