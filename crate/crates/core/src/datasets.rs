//! Dataset generation, CSV ingestion, normalization and partitioning.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::rng::{derive_seed, rng_from_seed, sample_standard_normal, shuffled_indices};

/// A feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub x: DataMatrix,
    pub y: Vec<usize>,
    pub class_count: usize,
}

impl LabeledDataset {
    pub fn new(x: DataMatrix, y: Vec<usize>, class_count: usize) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows but {} labels",
                x.rows(),
                y.len()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidParam(format!(
                "label {bad} outside 0..{class_count}"
            )));
        }
        Ok(Self { x, y, class_count })
    }

    pub fn rows(&self) -> usize {
        self.x.rows()
    }
}

// ---------------------------------------------------------------------------
// Artificial two-class dataset
// ---------------------------------------------------------------------------

/// Geometry constants for the artificial problem.
///
/// The three informative features are driven by the class sign `s` and two
/// shared latent factors `z1, z2 ~ U(-1, 1)`:
///
/// ```text
///   f1 = s*A1 + z1            + eps
///   f2 = s*A2 - z1 + XTALK*z2 + eps
///   f3 = s*A3 - z2            + eps
/// ```
///
/// Each feature alone (and each odd/even feature subset alone) leaves the
/// classes heavily overlapping, because the latent factors dominate the
/// class offsets. Jointly the factors cancel: f1 resolves the sign up to
/// z1, f2 cancels z1 up to the small cross-talk term, and f3 cancels z2,
/// so a short chain of axis-aligned splits separates the classes almost
/// perfectly while any single party's view cannot.
mod artificial {
    /// Class offset of feature 1 (the natural root split).
    pub const A1: f64 = 0.52;
    /// Class offset of feature 2.
    pub const A2: f64 = 0.52;
    /// Class offset of feature 3.
    pub const A3: f64 = 0.44;
    /// How much of factor z2 bleeds into feature 2. This is what keeps
    /// feature 3 essential: without resolving z2 the f2 refinement stays
    /// impure.
    pub const XTALK: f64 = 0.18;
    /// Measurement noise on the informative features.
    pub const EPS_SD: f64 = 0.02;
    /// Half-width of the uniform nuisance features.
    pub const NOISE_HALF_WIDTH: f64 = 1.15;
    /// Number of informative features.
    pub const INFORMATIVE: usize = 3;
    /// Total feature count.
    pub const FEATURES: usize = 20;
}

/// Number of features produced by [`generate_artificial`].
pub const ARTIFICIAL_FEATURES: usize = artificial::FEATURES;

fn artificial_split(n: usize, rng: &mut impl Rng) -> (DataMatrix, Vec<usize>) {
    use artificial::*;
    // Balanced labels in shuffled order.
    let order = shuffled_indices(n, rng);
    let mut labels = vec![0usize; n];
    for (rank, &row) in order.iter().enumerate() {
        labels[row] = rank % 2;
    }
    let mut values = Vec::with_capacity(n * FEATURES);
    for &label in &labels {
        let s = if label == 1 { 1.0 } else { -1.0 };
        let z1 = rng.gen_range(-1.0..1.0);
        let z2 = rng.gen_range(-1.0..1.0);
        let e1 = sample_standard_normal(rng) * EPS_SD;
        let e2 = sample_standard_normal(rng) * EPS_SD;
        let e3 = sample_standard_normal(rng) * EPS_SD;
        values.push(s * A1 + z1 + e1);
        values.push(s * A2 - z1 + XTALK * z2 + e2);
        values.push(s * A3 - z2 + e3);
        for _ in INFORMATIVE..FEATURES {
            values.push(rng.gen_range(-NOISE_HALF_WIDTH..NOISE_HALF_WIDTH));
        }
    }
    let names = (1..=FEATURES).map(|i| format!("f{i}")).collect();
    let x = DataMatrix::from_vec(n, FEATURES, values)
        .expect("generator produces finite values")
        .with_col_names(names)
        .expect("name count matches");
    (x, labels)
}

/// Generate the 20-dimensional two-class artificial problem: a labeled
/// training set, a labeled test set and an unlabeled public set, all
/// drawn from the same distribution. Deterministic per seed; the three
/// splits use independent derived streams so resizing one does not
/// perturb the others.
pub fn generate_artificial(
    n_train: usize,
    n_test: usize,
    n_public: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset, DataMatrix)> {
    if n_train == 0 || n_test == 0 || n_public == 0 {
        return Err(Error::InvalidParam(
            "artificial dataset sizes must all be at least 1".into(),
        ));
    }
    let (train_x, train_y) = artificial_split(n_train, &mut rng_from_seed(derive_seed(seed, "artificial/train")));
    let (test_x, test_y) = artificial_split(n_test, &mut rng_from_seed(derive_seed(seed, "artificial/test")));
    let (public_x, _) = artificial_split(n_public, &mut rng_from_seed(derive_seed(seed, "artificial/public")));
    Ok((
        LabeledDataset::new(train_x, train_y, 2)?,
        LabeledDataset::new(test_x, test_y, 2)?,
        public_x,
    ))
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Load a CSV file with a header row into a labeled dataset.
///
/// Categorical columns expand to one indicator column per level, named
/// `column=level`, levels in first-appearance order. Label classes are
/// numbered in first-appearance order. Missing values are rejected.
pub fn load_csv(
    path: &Path,
    label_column: &str,
    categorical_columns: &[String],
) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Ingestion(format!("bad header row: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();

    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Ingestion(format!("label column '{label_column}' not found")))?;
    let cat_set: BTreeSet<&str> = categorical_columns.iter().map(String::as_str).collect();
    for c in &cat_set {
        if !headers.iter().any(|h| h == c) {
            return Err(Error::Ingestion(format!(
                "categorical column '{c}' not found"
            )));
        }
    }

    struct Column {
        name: String,
        categorical: bool,
        numeric: Vec<f64>,
        raw: Vec<String>,
    }
    let mut columns: Vec<Column> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| Column {
            name: h.clone(),
            categorical: cat_set.contains(h.as_str()),
            numeric: Vec::new(),
            raw: Vec::new(),
        })
        .collect();
    let mut label_raw: Vec<String> = Vec::new();

    for (row_num, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| Error::Ingestion(format!("row {}: {e}", row_num + 2)))?;
        if record.len() != headers.len() {
            return Err(Error::Ingestion(format!(
                "row {}: {} fields, expected {}",
                row_num + 2,
                record.len(),
                headers.len()
            )));
        }
        let mut col_cursor = 0;
        for (i, field) in record.iter().enumerate() {
            if field.trim().is_empty() {
                return Err(Error::Ingestion(format!(
                    "row {}, column '{}': missing value",
                    row_num + 2,
                    headers[i]
                )));
            }
            if i == label_idx {
                label_raw.push(field.trim().to_string());
                continue;
            }
            let col = &mut columns[col_cursor];
            if col.categorical {
                col.raw.push(field.trim().to_string());
            } else {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Ingestion(format!(
                        "row {}, column '{}': cannot parse '{}' as a number",
                        row_num + 2,
                        headers[i],
                        field
                    ))
                })?;
                col.numeric.push(v);
            }
            col_cursor += 1;
        }
    }
    let n = label_raw.len();
    if n == 0 {
        return Err(Error::Ingestion("CSV contains no data rows".into()));
    }

    // Classes in first-appearance order.
    let mut classes: Vec<String> = Vec::new();
    let mut y = Vec::with_capacity(n);
    for l in &label_raw {
        let id = match classes.iter().position(|c| c == l) {
            Some(id) => id,
            None => {
                classes.push(l.clone());
                classes.len() - 1
            }
        };
        y.push(id);
    }

    // Expand columns.
    let mut out_names: Vec<String> = Vec::new();
    let mut out_cols: Vec<Vec<f64>> = Vec::new();
    for col in &columns {
        if col.categorical {
            let mut levels: Vec<&str> = Vec::new();
            for v in &col.raw {
                if !levels.contains(&v.as_str()) {
                    levels.push(v);
                }
            }
            for level in &levels {
                out_names.push(format!("{}={}", col.name, level));
                out_cols.push(
                    col.raw
                        .iter()
                        .map(|v| if v == level { 1.0 } else { 0.0 })
                        .collect(),
                );
            }
        } else {
            out_names.push(col.name.clone());
            out_cols.push(col.numeric.clone());
        }
    }

    let m = out_cols.len();
    let mut values = Vec::with_capacity(n * m);
    for i in 0..n {
        for col in &out_cols {
            values.push(col[i]);
        }
    }
    let x = DataMatrix::from_vec(n, m, values)?.with_col_names(out_names)?;
    LabeledDataset::new(x, y, classes.len())
}

/// Split a dataset into (train, test, public) row groups by a seeded
/// shuffle; the public slice drops its labels.
pub fn split_for_experiment(
    ds: &LabeledDataset,
    n_train: usize,
    n_test: usize,
    n_public: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset, DataMatrix)> {
    let need = n_train + n_test + n_public;
    if need > ds.rows() {
        return Err(Error::InvalidParam(format!(
            "split needs {} rows, dataset has {}",
            need,
            ds.rows()
        )));
    }
    if n_train == 0 || n_test == 0 || n_public == 0 {
        return Err(Error::InvalidParam("all split sizes must be positive".into()));
    }
    let mut rng = rng_from_seed(derive_seed(seed, "dataset/split"));
    let order = shuffled_indices(ds.rows(), &mut rng);
    let take = |range: std::ops::Range<usize>| -> Result<(DataMatrix, Vec<usize>)> {
        let idx = &order[range];
        Ok((
            ds.x.select_rows(idx)?,
            idx.iter().map(|&i| ds.y[i]).collect(),
        ))
    };
    let (train_x, train_y) = take(0..n_train)?;
    let (test_x, test_y) = take(n_train..n_train + n_test)?;
    let (public_x, _) = take(n_train + n_test..need)?;
    Ok((
        LabeledDataset::new(train_x, train_y, ds.class_count)?,
        LabeledDataset::new(test_x, test_y, ds.class_count)?,
        public_x,
    ))
}

/// Cross-validation split: fold `fold_idx` of `folds` becomes the test
/// set; the remaining rows are the training pool, from which `n_public`
/// rows are carved out (removed) as the unlabeled public set.
///
/// Fold assignment is a seeded shuffle of the full dataset using
/// `fold_seed` alone, so all folds of one run partition the same way;
/// the public draw uses `trial_seed` and varies per fold.
pub fn kfold_split(
    ds: &LabeledDataset,
    folds: usize,
    fold_idx: usize,
    n_public: usize,
    fold_seed: u64,
    trial_seed: u64,
) -> Result<(LabeledDataset, LabeledDataset, DataMatrix)> {
    if folds < 2 || folds > ds.rows() {
        return Err(Error::InvalidParam(format!(
            "cannot make {folds} folds from {} rows",
            ds.rows()
        )));
    }
    if fold_idx >= folds {
        return Err(Error::InvalidParam(format!(
            "fold index {fold_idx} out of range 0..{folds}"
        )));
    }
    let mut fold_rng = rng_from_seed(derive_seed(fold_seed, "dataset/folds"));
    let order = shuffled_indices(ds.rows(), &mut fold_rng);
    let base = ds.rows() / folds;
    let extra = ds.rows() % folds;
    let mut cursor = 0usize;
    let mut test_idx = Vec::new();
    let mut pool_idx = Vec::new();
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        let chunk = &order[cursor..cursor + size];
        if f == fold_idx {
            test_idx.extend_from_slice(chunk);
        } else {
            pool_idx.extend_from_slice(chunk);
        }
        cursor += size;
    }
    if n_public == 0 || n_public >= pool_idx.len() {
        return Err(Error::InvalidParam(format!(
            "public size {n_public} must be in 1..{} (training pool)",
            pool_idx.len()
        )));
    }
    let mut public_rng = rng_from_seed(derive_seed(trial_seed, "dataset/fold-public"));
    let pick = shuffled_indices(pool_idx.len(), &mut public_rng);
    let public_idx: Vec<usize> = pick[..n_public].iter().map(|&i| pool_idx[i]).collect();
    let public_set: std::collections::BTreeSet<usize> = public_idx.iter().copied().collect();
    let train_idx: Vec<usize> = pool_idx
        .iter()
        .copied()
        .filter(|i| !public_set.contains(i))
        .collect();

    let take = |idx: &[usize]| -> Result<(DataMatrix, Vec<usize>)> {
        Ok((
            ds.x.select_rows(idx)?,
            idx.iter().map(|&i| ds.y[i]).collect(),
        ))
    };
    let (train_x, train_y) = take(&train_idx)?;
    let (test_x, test_y) = take(&test_idx)?;
    let (public_x, _) = take(&public_idx)?;
    Ok((
        LabeledDataset::new(train_x, train_y, ds.class_count)?,
        LabeledDataset::new(test_x, test_y, ds.class_count)?,
        public_x,
    ))
}

// ---------------------------------------------------------------------------
// Partitioning
// ---------------------------------------------------------------------------

/// How sample rows are divided among the `c` row parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowScheme {
    /// Seeded shuffle, then near-equal contiguous chunks.
    RandomEqual,
    /// Chunks of consecutive indices.
    Contiguous,
}

/// How feature columns are divided among the `d` column parties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColScheme {
    /// Column `j` goes to group `j mod d` (for two groups: odd/even
    /// features in 1-based numbering).
    RoundRobin,
    /// Explicit index lists, one per group.
    ByIndexLists(Vec<Vec<usize>>),
}

/// Assignment of rows to `c` groups and columns to `d` groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub row_groups: Vec<Vec<usize>>,
    pub col_groups: Vec<Vec<usize>>,
}

impl PartitionPlan {
    pub fn new(row_groups: Vec<Vec<usize>>, col_groups: Vec<Vec<usize>>, n: usize, m: usize) -> Result<Self> {
        validate_groups(&row_groups, n, "row")?;
        validate_groups(&col_groups, m, "column")?;
        Ok(Self {
            row_groups,
            col_groups,
        })
    }

    /// Number of row parties.
    pub fn row_parties(&self) -> usize {
        self.row_groups.len()
    }

    /// Number of column parties.
    pub fn col_parties(&self) -> usize {
        self.col_groups.len()
    }

    /// The raw data block of party `(i, j)`.
    pub fn block(&self, x: &DataMatrix, i: usize, j: usize) -> Result<DataMatrix> {
        x.select_rows(&self.row_groups[i])?
            .select_cols(&self.col_groups[j])
    }

    /// Labels restricted to row group `i`.
    pub fn labels_for_row_group(&self, y: &[usize], i: usize) -> Vec<usize> {
        self.row_groups[i].iter().map(|&r| y[r]).collect()
    }
}

fn validate_groups(groups: &[Vec<usize>], total: usize, what: &str) -> Result<()> {
    if groups.is_empty() {
        return Err(Error::InvalidParam(format!("no {what} groups")));
    }
    let mut seen = vec![false; total];
    let mut count = 0usize;
    for (g, group) in groups.iter().enumerate() {
        if group.is_empty() {
            return Err(Error::InvalidParam(format!("{what} group {g} is empty")));
        }
        for &idx in group {
            if idx >= total {
                return Err(Error::InvalidParam(format!(
                    "{what} index {idx} out of range {total}"
                )));
            }
            if seen[idx] {
                return Err(Error::InvalidParam(format!(
                    "{what} index {idx} appears in two groups"
                )));
            }
            seen[idx] = true;
            count += 1;
        }
    }
    if count != total {
        return Err(Error::InvalidParam(format!(
            "{what} groups cover {count} of {total} indices"
        )));
    }
    Ok(())
}

/// Build a partition plan for an `n x m` dataset with `c` row groups and
/// `d` column groups. Deterministic per seed.
pub fn make_partition(
    n: usize,
    m: usize,
    c: usize,
    d: usize,
    row_scheme: RowScheme,
    col_scheme: &ColScheme,
    seed: u64,
) -> Result<PartitionPlan> {
    if c == 0 || c > n {
        return Err(Error::InvalidParam(format!(
            "cannot split {n} rows into {c} groups"
        )));
    }
    if d == 0 || d > m {
        return Err(Error::InvalidParam(format!(
            "cannot split {m} columns into {d} groups"
        )));
    }
    let row_order: Vec<usize> = match row_scheme {
        RowScheme::RandomEqual => {
            let mut rng = rng_from_seed(derive_seed(seed, "partition/rows"));
            shuffled_indices(n, &mut rng)
        }
        RowScheme::Contiguous => (0..n).collect(),
    };
    let mut row_groups = Vec::with_capacity(c);
    let base = n / c;
    let extra = n % c;
    let mut cursor = 0;
    for g in 0..c {
        let size = base + usize::from(g < extra);
        let mut group: Vec<usize> = row_order[cursor..cursor + size].to_vec();
        group.sort_unstable();
        row_groups.push(group);
        cursor += size;
    }

    let col_groups: Vec<Vec<usize>> = match col_scheme {
        ColScheme::RoundRobin => {
            let mut groups = vec![Vec::new(); d];
            for j in 0..m {
                groups[j % d].push(j);
            }
            groups
        }
        ColScheme::ByIndexLists(lists) => {
            if lists.len() != d {
                return Err(Error::InvalidParam(format!(
                    "{} column lists for d = {d}",
                    lists.len()
                )));
            }
            lists.clone()
        }
    };
    PartitionPlan::new(row_groups, col_groups, n, m)
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormScheme {
    ZScore,
    MinMax,
}

/// Per-feature affine normalization `(x - center) / scale`.
/// Zero-spread features get scale 1 so the transform stays invertible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub scheme: NormScheme,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

pub fn fit_norm(a: &DataMatrix, scheme: NormScheme) -> NormStats {
    match scheme {
        NormScheme::ZScore => {
            let center = a.col_means();
            let scale = a
                .col_variances()
                .iter()
                .map(|&v| {
                    let s = v.sqrt();
                    if s > 0.0 {
                        s
                    } else {
                        1.0
                    }
                })
                .collect();
            NormStats {
                scheme,
                center,
                scale,
            }
        }
        NormScheme::MinMax => {
            let bounds = a.col_bounds();
            let center = bounds.iter().map(|b| b.0).collect();
            let scale = bounds
                .iter()
                .map(|b| {
                    let w = b.1 - b.0;
                    if w > 0.0 {
                        w
                    } else {
                        1.0
                    }
                })
                .collect();
            NormStats {
                scheme,
                center,
                scale,
            }
        }
    }
}

pub fn apply_norm(stats: &NormStats, a: &DataMatrix) -> Result<DataMatrix> {
    transform(stats, a, false)
}

pub fn invert_norm(stats: &NormStats, a: &DataMatrix) -> Result<DataMatrix> {
    transform(stats, a, true)
}

fn transform(stats: &NormStats, a: &DataMatrix, invert: bool) -> Result<DataMatrix> {
    if a.cols() != stats.center.len() {
        return Err(Error::ShapeMismatch(format!(
            "normalization expects {} columns, got {}",
            stats.center.len(),
            a.cols()
        )));
    }
    let mut out = a.clone();
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let v = if invert {
                a.get(i, j) * stats.scale[j] + stats.center[j]
            } else {
                (a.get(i, j) - stats.center[j]) / stats.scale[j]
            };
            out.set(i, j, v);
        }
    }
    Ok(out)
}
