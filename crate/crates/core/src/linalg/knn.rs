//! Exact k-nearest-neighbor queries over matrix rows.

use crate::error::{Error, Result};
use crate::matrix::{euclidean, DataMatrix};

/// Indices of the `k` rows of `a` nearest to `query_row` in Euclidean
/// distance, excluding the query row itself. Distance ties break toward
/// the smaller row index, so results are fully deterministic.
pub fn knn_indices(a: &DataMatrix, query_row: usize, k: usize) -> Result<Vec<usize>> {
    if query_row >= a.rows() {
        return Err(Error::InvalidParam(format!(
            "query row {} out of range (rows = {})",
            query_row,
            a.rows()
        )));
    }
    if k == 0 || k >= a.rows() {
        return Err(Error::InvalidParam(format!(
            "k must be in 1..{} (rows - 1), got {}",
            a.rows(),
            k
        )));
    }
    let query = a.row(query_row);
    let mut order: Vec<(f64, usize)> = (0..a.rows())
        .filter(|&i| i != query_row)
        .map(|i| (euclidean(query, a.row(i)), i))
        .collect();
    order.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
    Ok(order.into_iter().take(k).map(|(_, i)| i).collect())
}
