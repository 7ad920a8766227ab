//! Anchor dataset constructors.
//!
//! Every constructor is a pure function of (inputs, spec): two calls with
//! identical arguments are bit-identical. That is the shared-randomness
//! contract that lets each party generate the anchor dataset locally
//! instead of receiving it over the wire.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{apply_norm, fit_norm, invert_norm, NormScheme, PartitionPlan};
use crate::error::{Error, Result};
use crate::linalg::{knn_indices, truncated_svd};
use crate::matrix::DataMatrix;
use crate::rng::{derive_seed, rng_from_seed, sample_standard_normal, shuffled_indices};

/// Which anchor construction to run, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum AnchorMethod {
    /// Uniform per-feature draws inside the raw data's feature ranges.
    Random,
    /// Per-party low-rank approximation plus Gaussian perturbation.
    Tsvd { rank: usize, delta: f64 },
    /// Randomized interpolation/extrapolation over the public dataset.
    Smote { k: usize, alpha: f64 },
    /// Subsample of the raw rows (ideal, non-private baseline).
    Raw,
}

/// Full anchor configuration: method, anchor count `r`, shared seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSpec {
    #[serde(flatten)]
    pub method: AnchorMethod,
    pub r: usize,
    pub seed: u64,
}

/// `r x m` matrix with entry `(i, j) ~ U(x_min[j], x_max[j])`.
///
/// Bounds are normally obtained per party and merged with
/// [`merge_bounds`]; since a column's global minimum is the minimum of
/// its per-row-party minima, the merged bounds equal the bounds of the
/// full matrix.
pub fn random_anchor(
    x_min: &[f64],
    x_max: &[f64],
    r: usize,
    seed: u64,
) -> Result<DataMatrix> {
    if x_min.len() != x_max.len() {
        return Err(Error::ShapeMismatch("bound vectors differ in length".into()));
    }
    if r == 0 {
        return Err(Error::InvalidParam("anchor count r must be positive".into()));
    }
    for (j, (lo, hi)) in x_min.iter().zip(x_max).enumerate() {
        if lo > hi {
            return Err(Error::InvalidParam(format!(
                "inverted bounds for feature {j}: {lo} > {hi}"
            )));
        }
    }
    let m = x_min.len();
    let mut rng = rng_from_seed(derive_seed(seed, "anchor/random"));
    let mut values = Vec::with_capacity(r * m);
    for _ in 0..r {
        for j in 0..m {
            if x_min[j] == x_max[j] {
                values.push(x_min[j]);
            } else {
                values.push(rng.gen_range(x_min[j]..x_max[j]));
            }
        }
    }
    DataMatrix::from_vec(r, m, values)
}

/// Elementwise union of per-party feature bounds.
pub fn merge_bounds(per_party: &[Vec<(f64, f64)>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = per_party
        .first()
        .ok_or_else(|| Error::InvalidParam("no bounds to merge".into()))?
        .len();
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for bounds in per_party {
        if bounds.len() != m {
            return Err(Error::ShapeMismatch("bound lengths differ".into()));
        }
        for j in 0..m {
            lo[j] = lo[j].min(bounds[j].0);
            hi[j] = hi[j].max(bounds[j].1);
        }
    }
    Ok((lo, hi))
}

/// TSVD-based anchors: each party block is replaced by its rank-`rank`
/// reconstruction plus `delta` times a standard-normal matrix, the blocks
/// are reassembled, and `r` rows are produced: a uniform subsample when
/// `r <= n`, otherwise random two-row affine combinations.
pub fn tsvd_anchor(
    x: &DataMatrix,
    plan: &PartitionPlan,
    rank: usize,
    delta: f64,
    r: usize,
    seed: u64,
) -> Result<DataMatrix> {
    if r == 0 {
        return Err(Error::InvalidParam("anchor count r must be positive".into()));
    }
    if delta < 0.0 {
        return Err(Error::InvalidParam(format!(
            "perturbation delta must be nonnegative, got {delta}"
        )));
    }
    let n = x.rows();
    let m = x.cols();
    let mut approx = DataMatrix::zeros(n, m);
    for (i, row_group) in plan.row_groups.iter().enumerate() {
        for (j, col_group) in plan.col_groups.iter().enumerate() {
            let block = plan.block(x, i, j)?;
            if rank > block.rows().min(block.cols()) {
                return Err(Error::InvalidParam(format!(
                    "TSVD rank {} exceeds block ({}, {}) size {}x{}",
                    rank,
                    i,
                    j,
                    block.rows(),
                    block.cols()
                )));
            }
            let mut rebuilt = truncated_svd(&block, rank)?.reconstruct();
            if delta > 0.0 {
                let mut rng =
                    rng_from_seed(derive_seed(seed, &format!("anchor/tsvd/block/{i}/{j}")));
                for bi in 0..rebuilt.rows() {
                    for bj in 0..rebuilt.cols() {
                        let e = sample_standard_normal(&mut rng);
                        rebuilt.set(bi, bj, rebuilt.get(bi, bj) + delta * e);
                    }
                }
            }
            for (bi, &gi) in row_group.iter().enumerate() {
                for (bj, &gj) in col_group.iter().enumerate() {
                    approx.set(gi, gj, rebuilt.get(bi, bj));
                }
            }
        }
    }

    let mut rng = rng_from_seed(derive_seed(seed, "anchor/tsvd/rows"));
    if r <= n {
        let order = shuffled_indices(n, &mut rng);
        approx.select_rows(&order[..r])
    } else {
        // Augmentation: each output row is an affine mix of two rows.
        let mut values = Vec::with_capacity(r * m);
        for _ in 0..r {
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n);
            if n > 1 && b == a {
                b = (b + 1) % n;
            }
            let w: f64 = rng.gen_range(0.0..1.0);
            for j in 0..m {
                values.push(w * approx.get(a, j) + (1.0 - w) * approx.get(b, j));
            }
        }
        DataMatrix::from_vec(r, m, values)
    }
}

/// SMOTE-style anchors from the public dataset.
///
/// The public set is z-scored, every public row emits its share of the
/// `r` anchors by stepping a distance `c ~ U(0, alpha)` toward a neighbor
/// drawn uniformly (with replacement) from its `k` nearest neighbors, and
/// the result is mapped back to raw units. `alpha > 1` permits
/// extrapolation beyond the neighbor; `k` is clamped to `p - 1` with a
/// warning. When `p` does not divide `r`, the first `r mod p` rows emit
/// one extra anchor.
pub fn smote_anchor(
    x_pub: &DataMatrix,
    r: usize,
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<DataMatrix> {
    let p = x_pub.rows();
    if p < 2 {
        return Err(Error::InvalidParam(format!(
            "SMOTE needs at least two public samples to form neighborhoods, got {p}"
        )));
    }
    if r == 0 {
        return Err(Error::InvalidParam("anchor count r must be positive".into()));
    }
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(Error::InvalidParam(format!(
            "extrapolation bound alpha must be positive, got {alpha}"
        )));
    }
    let k_eff = if k == 0 {
        return Err(Error::InvalidParam("neighbor count k must be positive".into()));
    } else if k > p - 1 {
        warn!("SMOTE k = {k} clamped to p - 1 = {}", p - 1);
        p - 1
    } else {
        k
    };

    let stats = fit_norm(x_pub, NormScheme::ZScore);
    let normed = apply_norm(&stats, x_pub)?;
    let m = normed.cols();

    let base = r / p;
    let extra = r % p;
    let mut rng = rng_from_seed(derive_seed(seed, "anchor/smote"));
    let mut values = Vec::with_capacity(r * m);
    for i in 0..p {
        let neighbors = knn_indices(&normed, i, k_eff)?;
        let count = base + usize::from(i < extra);
        let source = normed.row(i);
        for _ in 0..count {
            let pick = neighbors[rng.gen_range(0..k_eff)];
            let c: f64 = rng.gen_range(0.0..alpha);
            let target = normed.row(pick);
            for j in 0..m {
                values.push(source[j] + c * (target[j] - source[j]));
            }
        }
    }
    let anchors = DataMatrix::from_vec(r, m, values)?;
    invert_norm(&stats, &anchors)
}

/// Uniform random subsample of `r` raw rows (a permutation when `r = n`).
pub fn raw_anchor(x: &DataMatrix, r: usize, seed: u64) -> Result<DataMatrix> {
    if r == 0 {
        return Err(Error::InvalidParam("anchor count r must be positive".into()));
    }
    if r > x.rows() {
        return Err(Error::InvalidParam(format!(
            "cannot draw {r} raw anchors from {} rows",
            x.rows()
        )));
    }
    let mut rng = rng_from_seed(derive_seed(seed, "anchor/raw"));
    let order = shuffled_indices(x.rows(), &mut rng);
    x.select_rows(&order[..r])
}

/// Inputs an anchor construction may need, bundled so the pipeline can
/// dispatch on the method tag.
pub struct AnchorInputs<'a> {
    /// Full training matrix (raw and TSVD constructions).
    pub x_train: &'a DataMatrix,
    /// Partition plan (TSVD operates per block; random merges per-party bounds).
    pub plan: &'a PartitionPlan,
    /// Public dataset (SMOTE construction).
    pub x_public: &'a DataMatrix,
}

/// Build anchors according to `spec`.
pub fn build_anchor(spec: &AnchorSpec, inputs: &AnchorInputs) -> Result<DataMatrix> {
    match &spec.method {
        AnchorMethod::Random => {
            let mut per_party = Vec::new();
            for i in 0..inputs.plan.row_parties() {
                let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); inputs.x_train.cols()];
                for j in 0..inputs.plan.col_parties() {
                    let block = inputs.plan.block(inputs.x_train, i, j)?;
                    let block_bounds = block.col_bounds();
                    for (bj, &gj) in inputs.plan.col_groups[j].iter().enumerate() {
                        bounds[gj] = block_bounds[bj];
                    }
                }
                per_party.push(bounds);
            }
            let (lo, hi) = merge_bounds(&per_party)?;
            random_anchor(&lo, &hi, spec.r, spec.seed)
        }
        AnchorMethod::Tsvd { rank, delta } => tsvd_anchor(
            inputs.x_train,
            inputs.plan,
            *rank,
            *delta,
            spec.r,
            spec.seed,
        ),
        AnchorMethod::Smote { k, alpha } => {
            smote_anchor(inputs.x_public, spec.r, *k, *alpha, spec.seed)
        }
        AnchorMethod::Raw => raw_anchor(inputs.x_train, spec.r, spec.seed),
    }
}

/// The closed-form variance ratio of an extended-SMOTE sample relative to
/// its sources, `V[x'] / V[x] = (2/3) alpha^2 - alpha + 1`, valid in the
/// independent-pair regime (k = p - 1, centered data).
pub fn smote_variance_ratio(alpha: f64) -> f64 {
    (2.0 / 3.0) * alpha * alpha - alpha + 1.0
}
