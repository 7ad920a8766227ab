//! Regularized and plain least-squares solves.

use log::warn;

use crate::error::{Error, Result};
use crate::linalg::svd::full_svd;
use crate::matrix::DataMatrix;

/// Minimize `||A W - B||_F^2 + lambda ||W||_F^2` over `W`.
///
/// Solved through the normal equations with a Cholesky factorization;
/// for `lambda = 0` on a rank-deficient system it falls back to the
/// pseudoinverse (minimum-norm solution).
pub fn ridge_solve(a: &DataMatrix, b: &DataMatrix, lambda: f64) -> Result<DataMatrix> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidParam(format!(
            "ridge penalty must be a finite nonnegative number, got {lambda}"
        )));
    }
    if a.rows() != b.rows() {
        return Err(Error::ShapeMismatch(format!(
            "ridge: A has {} rows, B has {}",
            a.rows(),
            b.rows()
        )));
    }
    let at = a.transpose();
    let mut gram = at.matmul(a)?;
    for j in 0..gram.cols() {
        gram.set(j, j, gram.get(j, j) + lambda);
    }
    let rhs = at.matmul(b)?;
    match cholesky_solve(&gram, &rhs) {
        Some(w) => Ok(w),
        None => {
            warn!("ridge normal equations not positive definite; using pseudoinverse");
            lstsq(a, b)
        }
    }
}

/// Minimum-norm least-squares solution of `A W = B` via the SVD
/// pseudoinverse. Singular values below `max(n,m) * eps * sigma_max`
/// are treated as zero; trimming is logged because it signals a
/// rank-deficient system.
pub fn lstsq(a: &DataMatrix, b: &DataMatrix) -> Result<DataMatrix> {
    if a.rows() != b.rows() {
        return Err(Error::ShapeMismatch(format!(
            "lstsq: A has {} rows, B has {}",
            a.rows(),
            b.rows()
        )));
    }
    let svd = full_svd(a)?;
    let sigma_max = svd.singular_values.first().copied().unwrap_or(0.0);
    let cutoff = a.rows().max(a.cols()) as f64 * f64::EPSILON * sigma_max;
    let trimmed = svd.singular_values.iter().filter(|&&s| s <= cutoff).count();
    if trimmed > 0 {
        warn!(
            "lstsq: {} of {} singular values below cutoff (condition {:.3e}); \
             solving on the numerical row space",
            trimmed,
            svd.singular_values.len(),
            if *svd.singular_values.last().unwrap() > 0.0 {
                sigma_max / svd.singular_values.last().unwrap()
            } else {
                f64::INFINITY
            }
        );
    }
    // W = V * S^+ * U^T * B
    let utb = svd.u.transpose().matmul(b)?;
    let mut scaled = utb;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let inv = if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 };
        for j in 0..scaled.cols() {
            scaled.set(k, j, scaled.get(k, j) * inv);
        }
    }
    svd.vt.transpose().matmul(&scaled)
}

/// Cholesky factorization of a symmetric matrix plus triangular solves
/// for every right-hand-side column. Returns `None` when the matrix is
/// not numerically positive definite.
fn cholesky_solve(m: &DataMatrix, rhs: &DataMatrix) -> Option<DataMatrix> {
    let n = m.rows();
    if n != m.cols() || rhs.rows() != n {
        return None;
    }
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m.get(i, j);
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let cols = rhs.cols();
    let mut out = DataMatrix::zeros(n, cols);
    let mut y = vec![0.0f64; n];
    for c in 0..cols {
        for i in 0..n {
            let mut sum = rhs.get(i, c);
            for k in 0..i {
                sum -= l[i * n + k] * y[k];
            }
            y[i] = sum / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in (i + 1)..n {
                sum -= l[k * n + i] * out.get(k, c);
            }
            out.set(i, c, sum / l[i * n + i]);
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from_seed, sample_standard_normal};

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DataMatrix {
        let mut rng = rng_from_seed(seed);
        let values = (0..rows * cols)
            .map(|_| sample_standard_normal(&mut rng))
            .collect();
        DataMatrix::from_vec(rows, cols, values).unwrap()
    }

    #[test]
    fn identity_system_returns_rhs() {
        let b = random_matrix(4, 2, 1);
        let w = ridge_solve(&DataMatrix::identity(4), &b, 0.0).unwrap();
        assert!(b.sub(&w).unwrap().frobenius_norm() < 1e-10);
    }

    #[test]
    fn identity_with_unit_penalty_halves_rhs() {
        let b = random_matrix(4, 2, 2);
        let w = ridge_solve(&DataMatrix::identity(4), &b, 1.0).unwrap();
        for i in 0..4 {
            for j in 0..2 {
                assert!((w.get(i, j) - b.get(i, j) / 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normal_equation_residual_small() {
        let a = random_matrix(20, 5, 3);
        let b = random_matrix(20, 2, 4);
        let lambda = 0.1;
        let w = ridge_solve(&a, &b, lambda).unwrap();
        let at = a.transpose();
        let mut gram = at.matmul(&a).unwrap();
        for j in 0..5 {
            gram.set(j, j, gram.get(j, j) + lambda);
        }
        let lhs = gram.matmul(&w).unwrap();
        let rhs = at.matmul(&b).unwrap();
        let rel = lhs.sub(&rhs).unwrap().frobenius_norm() / rhs.frobenius_norm();
        assert!(rel < 1e-8, "relative residual {rel}");
    }

    #[test]
    fn negative_penalty_rejected() {
        let a = DataMatrix::identity(2);
        assert!(ridge_solve(&a, &a, -1.0).is_err());
    }

    #[test]
    fn rank_deficient_falls_back_to_pseudoinverse() {
        // Duplicate column: A^T A singular at lambda = 0.
        let a = DataMatrix::from_rows(&[
            vec![1.0, 1.0],
            vec![2.0, 2.0],
            vec![3.0, 3.0],
        ])
        .unwrap();
        let b = DataMatrix::from_rows(&[vec![2.0], vec![4.0], vec![6.0]]).unwrap();
        let w = ridge_solve(&a, &b, 0.0).unwrap();
        let fit = a.matmul(&w).unwrap();
        assert!(fit.sub(&b).unwrap().frobenius_norm() < 1e-9);
        // Minimum-norm solution splits the weight evenly.
        assert!((w.get(0, 0) - w.get(1, 0)).abs() < 1e-9);
    }

    #[test]
    fn lstsq_solves_consistent_system() {
        let a = random_matrix(10, 4, 8);
        let w_true = random_matrix(4, 3, 9);
        let b = a.matmul(&w_true).unwrap();
        let w = lstsq(&a, &b).unwrap();
        assert!(w.sub(&w_true).unwrap().frobenius_norm() < 1e-8);
    }
}
