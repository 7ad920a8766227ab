//! Truncated singular value decomposition via one-sided Jacobi rotations.
//!
//! One-sided Jacobi is slow on large matrices but simple, accurate and
//! strictly deterministic for a fixed input, which is what the rest of
//! the pipeline needs: every party must reproduce bit-identical
//! decompositions from identical inputs. Matrices in this project are
//! tall and narrow (thousands of rows, tens of columns), where the
//! O(m^2 n) sweeps are cheap.

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;

const SWEEP_LIMIT: usize = 128;
const ORTHO_TOL: f64 = 1e-14;

/// Rank-limited SVD factors: `u * diag(singular_values) * vt`.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// Left singular vectors, `rows x rank`, orthonormal columns.
    pub u: DataMatrix,
    /// Nonincreasing, nonnegative singular values, length `rank`.
    pub singular_values: Vec<f64>,
    /// Right singular vectors transposed, `rank x cols`, orthonormal rows.
    pub vt: DataMatrix,
}

impl TruncatedSvd {
    /// `u * diag(s) * vt`, mainly for tests and low-rank reconstruction.
    pub fn reconstruct(&self) -> DataMatrix {
        let rank = self.singular_values.len();
        let rows = self.u.rows();
        let cols = self.vt.cols();
        let mut out = DataMatrix::zeros(rows, cols);
        for i in 0..rows {
            for k in 0..rank {
                let scale = self.u.get(i, k) * self.singular_values[k];
                if scale == 0.0 {
                    continue;
                }
                for j in 0..cols {
                    out.set(i, j, out.get(i, j) + scale * self.vt.get(k, j));
                }
            }
        }
        out
    }
}

/// Best rank-`rank` factorization of `a` in the Frobenius sense.
///
/// Sign convention: the first nonzero entry of each right singular
/// vector is nonnegative, so repeated runs and different machines agree
/// on the factors, not only on the product.
pub fn truncated_svd(a: &DataMatrix, rank: usize) -> Result<TruncatedSvd> {
    let max_rank = a.rows().min(a.cols());
    if rank == 0 || rank > max_rank {
        return Err(Error::InvalidParam(format!(
            "rank {} out of range 1..={} for a {}x{} matrix",
            rank,
            max_rank,
            a.rows(),
            a.cols()
        )));
    }
    // One-sided Jacobi orthogonalizes columns; run on the transpose when
    // the matrix is wide so the working side is the short one.
    if a.rows() >= a.cols() {
        let (u, s, v) = jacobi_svd(a)?;
        Ok(truncate(u, s, v, rank))
    } else {
        let (u, s, v) = jacobi_svd(&a.transpose())?;
        // A^T = U S V^T  =>  A = V S U^T
        Ok(truncate(v, s, u, rank))
    }
}

/// Full SVD, rank = min(rows, cols).
pub fn full_svd(a: &DataMatrix) -> Result<TruncatedSvd> {
    truncated_svd(a, a.rows().min(a.cols()))
}

fn truncate(u: DataMatrix, s: Vec<f64>, v: DataMatrix, rank: usize) -> TruncatedSvd {
    let keep: Vec<usize> = (0..rank).collect();
    TruncatedSvd {
        u: u.select_cols(&keep).expect("rank checked"),
        singular_values: s[..rank].to_vec(),
        vt: v.select_cols(&keep).expect("rank checked").transpose(),
    }
}

/// Core routine for tall matrices (rows >= cols). Returns (U, s, V) with
/// U: rows x cols, V: cols x cols, s sorted nonincreasing.
fn jacobi_svd(a: &DataMatrix) -> Result<(DataMatrix, Vec<f64>, DataMatrix)> {
    let n = a.rows();
    let m = a.cols();
    let mut b = a.clone();
    let mut v = DataMatrix::identity(m);

    let mut converged = false;
    for _ in 0..SWEEP_LIMIT {
        let mut rotated = false;
        for p in 0..m {
            for q in (p + 1)..m {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..n {
                    let bp = b.get(i, p);
                    let bq = b.get(i, q);
                    alpha += bp * bp;
                    beta += bq * bq;
                    gamma += bp * bq;
                }
                if gamma.abs() <= ORTHO_TOL * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let bp = b.get(i, p);
                    let bq = b.get(i, q);
                    b.set(i, p, c * bp - s * bq);
                    b.set(i, q, s * bp + c * bq);
                }
                for i in 0..m {
                    let vp = v.get(i, p);
                    let vq = v.get(i, q);
                    v.set(i, p, c * vp - s * vq);
                    v.set(i, q, s * vp + c * vq);
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(format!(
            "jacobi SVD did not converge within {SWEEP_LIMIT} sweeps on a {n}x{m} matrix"
        )));
    }

    // Column norms are the singular values.
    let mut order: Vec<usize> = (0..m).collect();
    let norms: Vec<f64> = (0..m)
        .map(|j| (0..n).map(|i| b.get(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap().then(x.cmp(&y)));

    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let sigma_max = s.first().copied().unwrap_or(0.0);
    let mut u = DataMatrix::zeros(n, m);
    let mut v_sorted = DataMatrix::zeros(m, m);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..m {
            v_sorted.set(i, dst, v.get(i, src));
        }
        if norms[src] > sigma_max * 1e-13 && norms[src] > 0.0 {
            for i in 0..n {
                u.set(i, dst, b.get(i, src) / norms[src]);
            }
        }
    }

    complete_zero_columns(&mut u, &s, sigma_max);
    apply_sign_convention(&mut u, &mut v_sorted);
    Ok((u, s, v_sorted))
}

/// Left singular vectors for (numerically) zero singular values are
/// undetermined; fill them with a deterministic orthonormal completion
/// so the orthonormality invariant holds for any requested rank.
fn complete_zero_columns(u: &mut DataMatrix, s: &[f64], sigma_max: f64) {
    let n = u.rows();
    let m = u.cols();
    for (j, &sigma) in s.iter().enumerate() {
        if sigma > sigma_max * 1e-13 && sigma > 0.0 {
            continue;
        }
        let mut filled = false;
        for cand in 0..n {
            let mut col = vec![0.0; n];
            col[cand] = 1.0;
            for l in 0..m {
                if l == j {
                    continue;
                }
                let dot: f64 = (0..n).map(|i| u.get(i, l) * col[i]).sum();
                for (i, c) in col.iter_mut().enumerate() {
                    *c -= dot * u.get(i, l);
                }
            }
            let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.5 {
                for (i, c) in col.iter().enumerate() {
                    u.set(i, j, c / norm);
                }
                filled = true;
                break;
            }
        }
        debug_assert!(filled, "orthonormal completion failed");
    }
}

fn apply_sign_convention(u: &mut DataMatrix, v: &mut DataMatrix) {
    let m = v.cols();
    for j in 0..m {
        let lead = (0..v.rows())
            .map(|i| v.get(i, j))
            .find(|x| x.abs() > 1e-12)
            .unwrap_or(0.0);
        if lead < 0.0 {
            for i in 0..v.rows() {
                v.set(i, j, -v.get(i, j));
            }
            for i in 0..u.rows() {
                u.set(i, j, -u.get(i, j));
            }
        }
    }
}
