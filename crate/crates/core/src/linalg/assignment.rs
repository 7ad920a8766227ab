//! Minimum-cost perfect assignment on a square cost matrix.
//!
//! Hungarian algorithm in the shortest-augmenting-path formulation with
//! dual potentials, O(n^3). Used by the earth-mover's-distance metric,
//! where the transport plan is a permutation.

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;

/// Returns a permutation `sigma` minimizing `sum_i cost[i, sigma(i)]`
/// together with the optimal total. The optimal total is unique; the
/// permutation achieving it may not be, and this routine picks a
/// deterministic one.
pub fn min_cost_assignment(cost: &DataMatrix) -> Result<(Vec<usize>, f64)> {
    let n = cost.rows();
    if n != cost.cols() {
        return Err(Error::ShapeMismatch(format!(
            "assignment needs a square matrix, got {}x{}",
            cost.rows(),
            cost.cols()
        )));
    }
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }

    // 1-based arrays with index 0 as the virtual start column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // column -> row (1-based, 0 = free)
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < min_slack[j] {
                    min_slack[j] = cur;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        // Augment along the alternating path.
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[matched_row[j] - 1] = j - 1;
    }
    let total = perm
        .iter()
        .enumerate()
        .map(|(i, &j)| cost.get(i, j))
        .sum();
    Ok((perm, total))
}
