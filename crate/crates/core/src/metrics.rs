//! Evaluation metrics: accuracy, normalized mutual information, Dice
//! overlap of top-feature sets, earth mover's distance under binary
//! unit-sum transport, directional average minimum distance, and
//! mean / standard-error aggregation across trials.

use std::collections::BTreeMap;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::min_cost_assignment;
use crate::matrix::{euclidean, DataMatrix};
use crate::rng::{derive_seed, rng_from_seed, shuffled_indices};

/// Named metric values for one method in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub trial: usize,
    pub values: BTreeMap<String, f64>,
}

/// Fraction of positions where the two label vectors agree.
pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    if y_true.is_empty() {
        return Err(Error::InvalidParam("accuracy of empty labels".into()));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::ShapeMismatch(format!(
            "label lengths {} vs {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

/// Normalized mutual information `I(pred; true) / sqrt(H(pred) H(true))`
/// with natural-log entropies of the empirical joint distribution.
///
/// Edge cases: 1 when the two partitions are identical (including the
/// all-one-cluster case), 0 when exactly one side has zero entropy.
pub fn nmi(y_pred: &[usize], y_true: &[usize]) -> Result<f64> {
    if y_pred.is_empty() {
        return Err(Error::InvalidParam("NMI of empty labels".into()));
    }
    if y_pred.len() != y_true.len() {
        return Err(Error::ShapeMismatch(format!(
            "label lengths {} vs {}",
            y_pred.len(),
            y_true.len()
        )));
    }
    let n = y_pred.len() as f64;
    let mut pred_counts: BTreeMap<usize, f64> = BTreeMap::new();
    let mut true_counts: BTreeMap<usize, f64> = BTreeMap::new();
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&p, &t) in y_pred.iter().zip(y_true) {
        *pred_counts.entry(p).or_insert(0.0) += 1.0;
        *true_counts.entry(t).or_insert(0.0) += 1.0;
        *joint.entry((p, t)).or_insert(0.0) += 1.0;
    }
    let entropy = |counts: &BTreeMap<usize, f64>| -> f64 {
        counts
            .values()
            .map(|&c| {
                let p = c / n;
                -p * p.ln()
            })
            .sum()
    };
    let h_pred = entropy(&pred_counts);
    let h_true = entropy(&true_counts);
    if h_pred == 0.0 || h_true == 0.0 {
        // A zero-entropy side means a single cluster; the partitions are
        // identical only if both sides are single clusters.
        return Ok(if h_pred == 0.0 && h_true == 0.0 {
            1.0
        } else {
            0.0
        });
    }
    let mut mi = 0.0;
    for (&(p, t), &c) in &joint {
        let pj = c / n;
        mi += pj * (pj / (pred_counts[&p] / n * (true_counts[&t] / n))).ln();
    }
    Ok((mi / (h_pred * h_true).sqrt()).clamp(0.0, 1.0))
}

/// Overlap fraction `|a ∩ b| / t` between two feature sets of size `t`.
pub fn dice_t(f_star: &[usize], f_pred: &[usize], t: usize) -> Result<f64> {
    let star: std::collections::BTreeSet<usize> = f_star.iter().copied().collect();
    let pred: std::collections::BTreeSet<usize> = f_pred.iter().copied().collect();
    if star.len() != t || pred.len() != t || t == 0 {
        return Err(Error::InvalidParam(format!(
            "Dice_t needs two sets of exactly t = {t} distinct features (got {} and {})",
            star.len(),
            pred.len()
        )));
    }
    Ok(star.intersection(&pred).count() as f64 / t as f64)
}

/// Earth mover's distance between two point sets under a binary
/// assignment plan with unit row/column sums: the minimum over
/// permutations of the summed pairwise Euclidean distances.
///
/// The assignment constraints require equal set sizes; when they differ
/// the larger set is uniformly subsampled to the smaller size with the
/// provided seed (logged, so a reported value is reproducible).
pub fn emd(x: &DataMatrix, x_anchor: &DataMatrix, seed: u64) -> Result<f64> {
    if x.cols() != x_anchor.cols() {
        return Err(Error::ShapeMismatch(format!(
            "EMD column counts {} vs {}",
            x.cols(),
            x_anchor.cols()
        )));
    }
    if x.rows() == 0 || x_anchor.rows() == 0 {
        return Err(Error::InvalidParam("EMD of an empty point set".into()));
    }
    let q = x.rows().min(x_anchor.rows());
    let shrink = |m: &DataMatrix, tag: &str| -> Result<DataMatrix> {
        if m.rows() == q {
            return Ok(m.clone());
        }
        info!(
            "EMD: subsampling {tag} from {} to {q} rows (seed {seed}) to meet the \
             unit-sum assignment constraints",
            m.rows()
        );
        let mut rng = rng_from_seed(derive_seed(seed, "emd/subsample"));
        let mut idx = shuffled_indices(m.rows(), &mut rng);
        idx.truncate(q);
        idx.sort_unstable();
        m.select_rows(&idx)
    };
    let a = shrink(x, "raw side")?;
    let b = shrink(x_anchor, "anchor side")?;
    let mut cost = DataMatrix::zeros(q, q);
    for i in 0..q {
        for j in 0..q {
            cost.set(i, j, euclidean(a.row(i), b.row(j)));
        }
    }
    let (_, total) = min_cost_assignment(&cost)?;
    Ok(total)
}

/// Average minimum distance `(1/|A|) Σ_i min_j ||a_i - b_j||_2`.
/// Directional: `amd(a, b)` measures how close each row of `a` is to its
/// nearest row of `b`.
pub fn amd(a: &DataMatrix, b: &DataMatrix) -> Result<f64> {
    if a.cols() != b.cols() {
        return Err(Error::ShapeMismatch(format!(
            "AMD column counts {} vs {}",
            a.cols(),
            b.cols()
        )));
    }
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::InvalidParam("AMD of an empty point set".into()));
    }
    let mut total = 0.0;
    for i in 0..a.rows() {
        let row = a.row(i);
        let mut best = f64::INFINITY;
        for j in 0..b.rows() {
            let d = euclidean(row, b.row(j));
            if d < best {
                best = d;
            }
        }
        total += best;
    }
    Ok(total / a.rows() as f64)
}

/// [`amd`] on z-scored copies of both matrices, standardized by the
/// statistics of `reference` (normally the raw data). Off by default in
/// experiments (the reported AMD uses raw units as defined) but useful
/// when distances must be comparable across datasets with different
/// feature scales.
pub fn amd_normalized(a: &DataMatrix, b: &DataMatrix, reference: &DataMatrix) -> Result<f64> {
    let stats = crate::datasets::fit_norm(reference, crate::datasets::NormScheme::ZScore);
    amd(
        &crate::datasets::apply_norm(&stats, a)?,
        &crate::datasets::apply_norm(&stats, b)?,
    )
}

/// Mean and standard error of one metric across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

/// Aggregate per-trial reports into mean ± standard error per
/// (method, metric). Standard error is sample-stddev / sqrt(T), zero for
/// a single trial.
pub fn aggregate(reports: &[MetricReport]) -> Result<BTreeMap<String, BTreeMap<String, Aggregate>>> {
    if reports.is_empty() {
        return Err(Error::InvalidParam("no trial reports to aggregate".into()));
    }
    let mut buckets: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for r in reports {
        let method = buckets.entry(r.method.clone()).or_default();
        for (name, &v) in &r.values {
            method.entry(name.clone()).or_default().push(v);
        }
    }
    let mut out = BTreeMap::new();
    for (method, metrics) in buckets {
        let mut agg = BTreeMap::new();
        for (name, values) in metrics {
            let t = values.len();
            let mean = values.iter().sum::<f64>() / t as f64;
            let std_error = if t > 1 {
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (t - 1) as f64;
                (var / t as f64).sqrt()
            } else {
                0.0
            };
            agg.insert(
                name,
                Aggregate {
                    mean,
                    std_error,
                    trials: t,
                },
            );
        }
        out.insert(method, agg);
    }
    Ok(out)
}
