//! Declarative experiment configuration.
//!
//! Configs are TOML with a fixed schema; unknown keys are rejected so a
//! typo cannot silently drop a setting. The parsed struct is echoed
//! verbatim into every report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::{ColScheme, RowScheme};
use crate::error::{Error, Result};
use crate::protocol::ReductionDim;

/// Which comparison methods to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Centralized,
    Local,
    DcRaw,
    DcRand,
    DcTsvd,
    DcSmote,
}

impl Method {
    /// Display name used in report tables.
    pub fn display(&self) -> &'static str {
        match self {
            Method::Centralized => "Centralized",
            Method::Local => "Local",
            Method::DcRaw => "DC(raw)",
            Method::DcRand => "DC(rand)",
            Method::DcTsvd => "DC(TSVD)",
            Method::DcSmote => "DC(SMOTE)",
        }
    }

    /// Stable tag used for seed derivation.
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Centralized => "centralized",
            Method::Local => "local",
            Method::DcRaw => "dc-raw",
            Method::DcRand => "dc-rand",
            Method::DcTsvd => "dc-tsvd",
            Method::DcSmote => "dc-smote",
        }
    }

    pub fn is_dc(&self) -> bool {
        matches!(
            self,
            Method::DcRaw | Method::DcRand | Method::DcTsvd | Method::DcSmote
        )
    }
}

/// Which metrics to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Acc,
    Nmi,
    Dice,
    AmdRaw,
    AmdAnc,
    Emd,
}

impl MetricKind {
    /// Column key in reports and CSV files.
    pub fn key(&self) -> &'static str {
        match self {
            MetricKind::Acc => "acc",
            MetricKind::Nmi => "nmi",
            MetricKind::Dice => "dice",
            MetricKind::AmdRaw => "amd_raw",
            MetricKind::AmdAnc => "amd_anc",
            MetricKind::Emd => "emd",
        }
    }

    /// Anchor-based metrics only exist for DC methods.
    pub fn needs_anchor(&self) -> bool {
        matches!(self, MetricKind::AmdRaw | MetricKind::AmdAnc | MetricKind::Emd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// The built-in two-class generator.
    Artificial {
        n_train: usize,
        n_test: usize,
        n_public: usize,
    },
    /// A CSV file, re-split into train/test/public every trial.
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default)]
        categorical_columns: Vec<String>,
        n_train: usize,
        n_test: usize,
        n_public: usize,
    },
    /// A CSV file evaluated by k-fold cross-validation: trial t tests on
    /// fold t and trains on the rest (minus the public carve-out).
    /// `run.trials` must equal `folds`.
    CsvKfold {
        path: PathBuf,
        label_column: String,
        #[serde(default)]
        categorical_columns: Vec<String>,
        folds: usize,
        n_public: usize,
    },
}

impl DatasetConfig {
    pub fn n_public(&self) -> usize {
        match self {
            DatasetConfig::Artificial { n_public, .. }
            | DatasetConfig::Csv { n_public, .. }
            | DatasetConfig::CsvKfold { n_public, .. } => *n_public,
        }
    }

    /// Training-set size when it is known without loading data.
    pub fn static_train_size(&self) -> Option<usize> {
        match self {
            DatasetConfig::Artificial { n_train, .. }
            | DatasetConfig::Csv { n_train, .. } => Some(*n_train),
            DatasetConfig::CsvKfold { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColSchemeKind {
    RoundRobin,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub row_parties: usize,
    pub col_parties: usize,
    pub row_scheme: RowScheme,
    pub col_scheme: ColSchemeKind,
    /// Explicit column groups, required when `col_scheme = "explicit"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col_groups: Option<Vec<Vec<usize>>>,
}

impl PartitionConfig {
    pub fn col_scheme(&self) -> Result<ColScheme> {
        match self.col_scheme {
            ColSchemeKind::RoundRobin => Ok(ColScheme::RoundRobin),
            ColSchemeKind::Explicit => {
                let groups = self.col_groups.clone().ok_or_else(|| {
                    Error::Config("col_scheme = \"explicit\" requires col_groups".into())
                })?;
                Ok(ColScheme::ByIndexLists(groups))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionConfig {
    /// Per-party intermediate dimension: an integer or "cols-minus-one".
    pub intermediate_dim: ReductionDim,
    /// Collaboration dimension; defaults to the smallest concatenated
    /// per-row-party width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsConfig {
    pub ridge_lambda: f64,
    pub tree_max_splits: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TsvdParams {
    pub rank: usize,
    pub delta: f64,
}

impl Default for TsvdParams {
    fn default() -> Self {
        Self {
            rank: 3,
            delta: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoteParams {
    pub k: usize,
    pub alpha: f64,
}

impl Default for SmoteParams {
    fn default() -> Self {
        Self { k: 25, alpha: 1.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorConfig {
    /// Anchor sample count r, shared by every anchor method.
    pub r: usize,
    #[serde(default)]
    pub tsvd: TsvdParams,
    #[serde(default)]
    pub smote: SmoteParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub list: Vec<MetricKind>,
    /// The t of the Dice top-feature overlap.
    pub dice_t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub trials: usize,
    pub base_seed: u64,
}

/// A full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub partition: PartitionConfig,
    pub reduction: ReductionConfig,
    pub models: ModelsConfig,
    pub methods: Vec<Method>,
    pub anchor: AnchorConfig,
    pub metrics: MetricsConfig,
    pub run: RunConfig,
}

impl ExperimentConfig {
    /// Parse from TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Load from a file; a relative CSV path is resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        match &mut config.dataset {
            DatasetConfig::Csv { path: csv_path, .. }
            | DatasetConfig::CsvKfold { path: csv_path, .. } => {
                if csv_path.is_relative() {
                    if let Some(dir) = path.parent() {
                        *csv_path = dir.join(&csv_path);
                    }
                }
            }
            DatasetConfig::Artificial { .. } => {}
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Static validation; data-dependent checks (column widths of a CSV)
    /// happen when the data is first loaded.
    pub fn validate(&self) -> Result<()> {
        match &self.dataset {
            DatasetConfig::Artificial {
                n_train,
                n_test,
                n_public,
            }
            | DatasetConfig::Csv {
                n_train,
                n_test,
                n_public,
                ..
            } => {
                if *n_train == 0 || *n_test == 0 || *n_public == 0 {
                    return Err(Error::Config("dataset split sizes must be positive".into()));
                }
            }
            DatasetConfig::CsvKfold { folds, n_public, .. } => {
                if *folds < 2 {
                    return Err(Error::Config("k-fold mode needs at least 2 folds".into()));
                }
                if *n_public == 0 {
                    return Err(Error::Config("n_public must be positive".into()));
                }
                if self.run.trials != *folds {
                    return Err(Error::Config(format!(
                        "k-fold mode requires run.trials ({}) to equal folds ({folds})",
                        self.run.trials
                    )));
                }
            }
        }
        if self.run.trials == 0 {
            return Err(Error::Config("run.trials must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods list is empty".into()));
        }
        if self.metrics.list.is_empty() {
            return Err(Error::Config("metrics list is empty".into()));
        }
        if self.metrics.dice_t == 0 {
            return Err(Error::Config("metrics.dice_t must be at least 1".into()));
        }
        let c = self.partition.row_parties;
        let d = self.partition.col_parties;
        if c == 0 || d == 0 {
            return Err(Error::Config("partition party counts must be positive".into()));
        }
        if let Some(n_train) = self.dataset.static_train_size() {
            if c > n_train {
                return Err(Error::Config(format!(
                    "cannot split {n_train} training rows across {c} row parties"
                )));
            }
            if self.methods.contains(&Method::DcRaw) && self.anchor.r > n_train {
                return Err(Error::Config(format!(
                    "raw anchors need r <= n_train ({} > {n_train})",
                    self.anchor.r
                )));
            }
        }
        self.partition.col_scheme()?;
        if self.anchor.r == 0 {
            return Err(Error::Config("anchor.r must be positive".into()));
        }
        if self.methods.contains(&Method::DcSmote) {
            let s = self.anchor.smote;
            if s.alpha <= 0.0 || s.alpha.is_nan() {
                return Err(Error::Config("anchor.smote.alpha must be positive".into()));
            }
            if s.k == 0 {
                return Err(Error::Config("anchor.smote.k must be positive".into()));
            }
        }
        if self.methods.contains(&Method::DcTsvd) && self.anchor.tsvd.rank == 0 {
            return Err(Error::Config("anchor.tsvd.rank must be positive".into()));
        }
        if self.models.ridge_lambda <= 0.0 || self.models.ridge_lambda.is_nan() {
            return Err(Error::Config("models.ridge_lambda must be positive".into()));
        }
        if let ReductionDim::Fixed(0) = self.reduction.intermediate_dim {
            return Err(Error::Config("reduction.intermediate_dim must be positive".into()));
        }
        if let Some(0) = self.reduction.target_dim {
            return Err(Error::Config("reduction.target_dim must be positive".into()));
        }
        // Width checks that are static for the artificial dataset.
        if let DatasetConfig::Artificial { .. } = self.dataset {
            self.validate_widths(crate::datasets::ARTIFICIAL_FEATURES)?;
        }
        Ok(())
    }

    /// Checks requiring the feature count; called again for CSV data
    /// once the file is loaded.
    pub fn validate_widths(&self, m: usize) -> Result<()> {
        let d = self.partition.col_parties;
        if d > m {
            return Err(Error::Config(format!(
                "cannot split {m} columns across {d} column parties"
            )));
        }
        let groups = match self.partition.col_scheme()? {
            ColScheme::RoundRobin => {
                let mut groups = vec![Vec::new(); d];
                for j in 0..m {
                    groups[j % d].push(j);
                }
                groups
            }
            ColScheme::ByIndexLists(lists) => {
                for (g, list) in lists.iter().enumerate() {
                    if let Some(&bad) = list.iter().find(|&&j| j >= m) {
                        return Err(Error::Config(format!(
                            "col_groups[{g}] references column {bad}, dataset has {m}"
                        )));
                    }
                }
                lists
            }
        };
        for (g, group) in groups.iter().enumerate() {
            let dim = self.reduction.intermediate_dim.resolve(group.len());
            if dim == 0 || dim >= group.len() {
                return Err(Error::Config(format!(
                    "intermediate dim {dim} is not a strict reduction of column group {g} \
                     (width {})",
                    group.len()
                )));
            }
        }
        if self.metrics.list.contains(&MetricKind::Dice) && self.metrics.dice_t > m {
            return Err(Error::Config(format!(
                "dice_t {} exceeds feature count {m}",
                self.metrics.dice_t
            )));
        }
        Ok(())
    }
}
