//! Multi-trial experiment runner and report emission.
//!
//! Per-trial seeds are `base_seed + trial`, so any single trial can be
//! re-run in isolation; within a trial every randomized stage derives
//! its own stream from a (seed, tag) pair, so removing one method from
//! the config cannot shift another method's numbers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::anchor::{AnchorMethod, AnchorSpec};
use crate::config::{DatasetConfig, ExperimentConfig, Method, MetricKind};
use crate::datasets::{
    generate_artificial, kfold_split, load_csv, make_partition, split_for_experiment,
    LabeledDataset, PartitionPlan,
};
use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::metrics::{accuracy, aggregate, amd, dice_t, emd, nmi, Aggregate, MetricReport};
use crate::models::{tree_fit, DecisionTree};
use crate::protocol::{run_dc_pipeline, PipelineParams};
use crate::rng::derive_seed;

/// Deterministic experiment output; byte-identical for identical
/// (config, seed) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// Verbatim echo of the configuration that produced this report.
    pub config: ExperimentConfig,
    pub version: String,
    /// One entry per configured method per trial, trial-major order.
    pub trials: Vec<MetricReport>,
    /// Mean and standard error per method per metric.
    pub aggregated: BTreeMap<String, BTreeMap<String, Aggregate>>,
    /// Methods that failed, with the failing trial and message; other
    /// methods still run.
    pub method_errors: BTreeMap<String, String>,
    /// Methodological notes (aggregation conventions and similar).
    pub notes: Vec<String>,
}

/// Wall-clock accounting, reported separately from the canonical report
/// so report bytes stay reproducible.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunTimings {
    pub total_ms: f64,
    pub per_method_ms: BTreeMap<String, f64>,
}

/// Per-trial working set shared by all methods.
struct TrialData {
    train: LabeledDataset,
    test: LabeledDataset,
    public: DataMatrix,
    plan: PartitionPlan,
    /// Centralized interpretable model; the Dice reference regardless of
    /// which methods are configured.
    reference_tree: DecisionTree,
    reference_top: Vec<usize>,
}

fn prepare_trial(
    config: &ExperimentConfig,
    csv_cache: &mut Option<LabeledDataset>,
    trial: usize,
    trial_seed: u64,
) -> Result<TrialData> {
    let (train, test, public) = match &config.dataset {
        DatasetConfig::Artificial {
            n_train,
            n_test,
            n_public,
        } => generate_artificial(*n_train, *n_test, *n_public, trial_seed)?,
        DatasetConfig::Csv {
            path,
            label_column,
            categorical_columns,
            n_train,
            n_test,
            n_public,
        } => {
            if csv_cache.is_none() {
                let ds = load_csv(path, label_column, categorical_columns)?;
                config.validate_widths(ds.x.cols())?;
                *csv_cache = Some(ds);
            }
            split_for_experiment(
                csv_cache.as_ref().unwrap(),
                *n_train,
                *n_test,
                *n_public,
                trial_seed,
            )?
        }
        DatasetConfig::CsvKfold {
            path,
            label_column,
            categorical_columns,
            folds,
            n_public,
        } => {
            if csv_cache.is_none() {
                let ds = load_csv(path, label_column, categorical_columns)?;
                config.validate_widths(ds.x.cols())?;
                *csv_cache = Some(ds);
            }
            kfold_split(
                csv_cache.as_ref().unwrap(),
                *folds,
                trial,
                *n_public,
                config.run.base_seed,
                trial_seed,
            )?
        }
    };
    let plan = make_partition(
        train.rows(),
        train.x.cols(),
        config.partition.row_parties,
        config.partition.col_parties,
        config.partition.row_scheme,
        &config.partition.col_scheme()?,
        derive_seed(trial_seed, "trial/partition"),
    )?;
    let reference_tree = tree_fit(
        &train.x,
        &train.y,
        train.class_count,
        config.models.tree_max_splits,
    )?;
    let reference_top = reference_tree.top_features(config.metrics.dice_t);
    Ok(TrialData {
        train,
        test,
        public,
        plan,
        reference_tree,
        reference_top,
    })
}

/// Evaluate one fitted model's predictions, appending each requested
/// recognition metric to its per-party sample list. `top_features` is
/// `None` when the model cannot supply a top-t set (fewer features than
/// t); that party then contributes no Dice sample.
fn recognition_metrics(
    config: &ExperimentConfig,
    data: &TrialData,
    predictions: &[usize],
    top_features: Option<&[usize]>,
    samples: &mut BTreeMap<String, Vec<f64>>,
) -> Result<()> {
    for metric in &config.metrics.list {
        let v = match metric {
            MetricKind::Acc => accuracy(&data.test.y, predictions)?,
            MetricKind::Nmi => nmi(predictions, &data.test.y)?,
            MetricKind::Dice => match top_features {
                Some(top) => dice_t(&data.reference_top, top, config.metrics.dice_t)?,
                None => continue,
            },
            _ => continue,
        };
        samples.entry(metric.key().to_string()).or_default().push(v);
    }
    Ok(())
}

/// Collapse per-party metric samples into their means.
fn mean_samples(samples: BTreeMap<String, Vec<f64>>) -> BTreeMap<String, f64> {
    samples
        .into_iter()
        .map(|(k, v)| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (k, mean)
        })
        .collect()
}

fn anchor_metrics(
    config: &ExperimentConfig,
    data: &TrialData,
    anchor: &DataMatrix,
    trial_seed: u64,
    values: &mut BTreeMap<String, f64>,
) -> Result<()> {
    for metric in &config.metrics.list {
        let v = match metric {
            MetricKind::AmdRaw => amd(&data.train.x, anchor)?,
            MetricKind::AmdAnc => amd(anchor, &data.train.x)?,
            MetricKind::Emd => emd(&data.train.x, anchor, derive_seed(trial_seed, "metric/emd"))?,
            _ => continue,
        };
        values.insert(metric.key().to_string(), v);
    }
    Ok(())
}

fn anchor_spec_for(config: &ExperimentConfig, method: Method, trial_seed: u64) -> AnchorSpec {
    let seed = derive_seed(trial_seed, method.tag());
    let method = match method {
        Method::DcRaw => AnchorMethod::Raw,
        Method::DcRand => AnchorMethod::Random,
        Method::DcTsvd => AnchorMethod::Tsvd {
            rank: config.anchor.tsvd.rank,
            delta: config.anchor.tsvd.delta,
        },
        Method::DcSmote => AnchorMethod::Smote {
            k: config.anchor.smote.k,
            alpha: config.anchor.smote.alpha,
        },
        _ => unreachable!("anchor spec requested for a non-DC method"),
    };
    AnchorSpec {
        method,
        r: config.anchor.r,
        seed,
    }
}

fn run_method(
    config: &ExperimentConfig,
    data: &TrialData,
    method: Method,
    trial: usize,
    trial_seed: u64,
) -> Result<MetricReport> {
    let mut samples: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut values = BTreeMap::new();
    match method {
        Method::Centralized => {
            let predictions = data.reference_tree.predict(&data.test.x)?;
            let top = data.reference_tree.top_features(config.metrics.dice_t);
            recognition_metrics(config, data, &predictions, Some(&top), &mut samples)?;
        }
        Method::Local => {
            // Each party trains on its own block; the reported number is
            // the mean over all c*d party models. Dice maps party-local
            // feature indices back to global columns; parties narrower
            // than t contribute no Dice sample.
            for i in 0..data.plan.row_parties() {
                let labels = data.plan.labels_for_row_group(&data.train.y, i);
                for j in 0..data.plan.col_parties() {
                    let block = data.plan.block(&data.train.x, i, j)?;
                    let width = block.cols();
                    let tree = tree_fit(
                        &block,
                        &labels,
                        data.train.class_count,
                        config.models.tree_max_splits,
                    )?;
                    let test_block = data.test.x.select_cols(&data.plan.col_groups[j])?;
                    let predictions = tree.predict(&test_block)?;
                    let global_top: Option<Vec<usize>> = (width >= config.metrics.dice_t)
                        .then(|| {
                            tree.top_features(config.metrics.dice_t)
                                .iter()
                                .map(|&f| data.plan.col_groups[j][f])
                                .collect()
                        });
                    recognition_metrics(
                        config,
                        data,
                        &predictions,
                        global_top.as_deref(),
                        &mut samples,
                    )?;
                }
            }
        }
        dc => {
            let spec = anchor_spec_for(config, dc, trial_seed);
            let params = PipelineParams {
                reduction: config.reduction.intermediate_dim,
                target_dim: config.reduction.target_dim,
                ridge_lambda: config.models.ridge_lambda,
                tree_max_splits: config.models.tree_max_splits,
            };
            let out = run_dc_pipeline(&data.train, &data.plan, &spec, &data.public, &params)?;
            for tree in &out.distilled {
                let predictions = tree.predict(&data.test.x)?;
                let top = tree.top_features(config.metrics.dice_t);
                recognition_metrics(config, data, &predictions, Some(&top), &mut samples)?;
            }
            anchor_metrics(config, data, &out.anchor, trial_seed, &mut values)?;
        }
    }
    values.extend(mean_samples(samples));
    Ok(MetricReport {
        method: method.display().to_string(),
        trial,
        values,
    })
}

/// Run every configured method over `trials` seeded trials and aggregate.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(ExperimentReport, RunTimings)> {
    config.validate()?;
    let started = Instant::now();
    let mut csv_cache: Option<LabeledDataset> = None;
    let mut trials = Vec::new();
    let mut method_errors: BTreeMap<String, String> = BTreeMap::new();
    let mut per_method_ms: BTreeMap<String, f64> = BTreeMap::new();

    for trial in 0..config.run.trials {
        let trial_seed = config.run.base_seed.wrapping_add(trial as u64);
        let data = prepare_trial(config, &mut csv_cache, trial, trial_seed)?;
        for &method in &config.methods {
            let clock = Instant::now();
            match run_method(config, &data, method, trial, trial_seed) {
                Ok(report) => trials.push(report),
                Err(e) => {
                    warn!("method {} failed on trial {trial}: {e}", method.display());
                    method_errors
                        .entry(method.display().to_string())
                        .or_insert_with(|| format!("trial {trial}: {e}"));
                }
            }
            *per_method_ms
                .entry(method.display().to_string())
                .or_insert(0.0) += clock.elapsed().as_secs_f64() * 1e3;
        }
    }

    let aggregated = aggregate(&trials)?;
    let report = ExperimentReport {
        config: config.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        trials,
        aggregated,
        method_errors,
        notes: vec![
            "Local rows aggregate the mean over all row x column party models".to_string(),
            "Dice reference set: top-t impurity importances of the centralized tree"
                .to_string(),
            "per-trial seed = base_seed + trial".to_string(),
            "reduction maps: PCA, centered, unscaled".to_string(),
            format!(
                "central model: ridge one-hot classifier, lambda = {}",
                config.models.ridge_lambda
            ),
        ],
    };
    let timings = RunTimings {
        total_ms: started.elapsed().as_secs_f64() * 1e3,
        per_method_ms,
    };
    Ok((report, timings))
}

/// Mean-accuracy grid over (k, alpha) for the SMOTE anchor method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub k_values: Vec<usize>,
    pub alpha_values: Vec<f64>,
    /// `mean_acc[i][j]` is the mean ACC at (k_values[i], alpha_values[j]).
    pub mean_acc: Vec<Vec<f64>>,
}

/// Run one DC(SMOTE)-only experiment per grid point. Infeasible `k`
/// values (k > p - 1) are clamped with a warning.
pub fn run_sweep(
    config: &ExperimentConfig,
    k_grid: &[usize],
    alpha_grid: &[f64],
) -> Result<SweepGrid> {
    if k_grid.is_empty() || alpha_grid.is_empty() {
        return Err(Error::Config("sweep grids must be nonempty".into()));
    }
    let n_public = config.dataset.n_public();
    let mut mean_acc = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        let k_eff = if k >= n_public {
            warn!("sweep k = {k} clamped to p - 1 = {}", n_public - 1);
            n_public - 1
        } else {
            k
        };
        let mut row = Vec::with_capacity(alpha_grid.len());
        for &alpha in alpha_grid {
            let mut point = config.clone();
            point.methods = vec![Method::DcSmote];
            point.anchor.smote.k = k_eff;
            point.anchor.smote.alpha = alpha;
            if !point.metrics.list.contains(&MetricKind::Acc) {
                point.metrics.list.push(MetricKind::Acc);
            }
            let (report, _) = run_experiment(&point)?;
            let acc = report
                .aggregated
                .get(Method::DcSmote.display())
                .and_then(|m| m.get(MetricKind::Acc.key()))
                .map(|a| a.mean)
                .ok_or_else(|| Error::Config("sweep point produced no accuracy".into()))?;
            row.push(acc);
        }
        mean_acc.push(row);
    }
    Ok(SweepGrid {
        k_values: k_grid.to_vec(),
        alpha_values: alpha_grid.to_vec(),
        mean_acc,
    })
}

/// Files written by [`emit_report`].
#[derive(Debug, Clone)]
pub struct EmittedFiles {
    pub trials_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub report_json: PathBuf,
    pub timings_json: PathBuf,
}

/// Write the flat per-trial CSV, the aggregated mean ± standard-error
/// table, the canonical JSON report, and (separately, because it is not
/// reproducible) the timing file.
///
/// `trials.csv` columns: `method, trial`, then one column per configured
/// metric in config order. `summary.csv` columns:
/// `method, metric, mean, std_error, trials`.
pub fn emit_report(
    report: &ExperimentReport,
    timings: &RunTimings,
    out_dir: &Path,
) -> Result<EmittedFiles> {
    std::fs::create_dir_all(out_dir)?;
    let metric_keys: Vec<&str> = report
        .config
        .metrics
        .list
        .iter()
        .map(|m| m.key())
        .collect();

    let trials_csv = out_dir.join("trials.csv");
    {
        let mut w = csv::Writer::from_path(&trials_csv)?;
        let mut header = vec!["method".to_string(), "trial".to_string()];
        header.extend(metric_keys.iter().map(|k| k.to_string()));
        w.write_record(&header)?;
        for t in &report.trials {
            let mut record = vec![t.method.clone(), t.trial.to_string()];
            for key in &metric_keys {
                record.push(
                    t.values
                        .get(*key)
                        .map(|v| format!("{v:.12}"))
                        .unwrap_or_default(),
                );
            }
            w.write_record(&record)?;
        }
        w.flush()?;
    }

    let summary_csv = out_dir.join("summary.csv");
    {
        // Mean ± standard error, one row per method, metrics in config
        // order; cells stay empty where a metric does not apply.
        let mut w = csv::Writer::from_path(&summary_csv)?;
        let mut header = vec!["method".to_string()];
        for key in &metric_keys {
            header.push(format!("{key}_mean"));
            header.push(format!("{key}_se"));
        }
        w.write_record(&header)?;
        for method in &report.config.methods {
            let name = method.display();
            let mut record = vec![name.to_string()];
            let metrics = report.aggregated.get(name);
            for key in &metric_keys {
                match metrics.and_then(|m| m.get(*key)) {
                    Some(agg) => {
                        record.push(format!("{:.12}", agg.mean));
                        record.push(format!("{:.12}", agg.std_error));
                    }
                    None => {
                        record.push(String::new());
                        record.push(String::new());
                    }
                }
            }
            w.write_record(&record)?;
        }
        w.flush()?;
    }

    let report_json = out_dir.join("report.json");
    std::fs::write(
        &report_json,
        serde_json::to_string_pretty(report).map_err(|e| Error::Config(e.to_string()))?,
    )?;

    let timings_json = out_dir.join("timings.json");
    std::fs::write(
        &timings_json,
        serde_json::to_string_pretty(timings).map_err(|e| Error::Config(e.to_string()))?,
    )?;

    Ok(EmittedFiles {
        trials_csv,
        summary_csv,
        report_json,
        timings_json,
    })
}

/// Write a sweep grid as CSV: rows = k, columns = alpha.
pub fn emit_sweep(grid: &SweepGrid, out_dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["k".to_string()];
    header.extend(grid.alpha_values.iter().map(|a| format!("alpha={a}")));
    w.write_record(&header)?;
    for (i, &k) in grid.k_values.iter().enumerate() {
        let mut record = vec![k.to_string()];
        record.extend(grid.mean_acc[i].iter().map(|v| format!("{v:.12}")));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(path)
}

/// Parse a previously emitted canonical report.
pub fn parse_report(path: &Path) -> Result<ExperimentReport> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Decode(e.to_string()))
}

/// Render the aggregated table as mean ± standard error, one row per
/// method.
pub fn format_summary(report: &ExperimentReport) -> String {
    let metric_keys: Vec<&str> = report
        .config
        .metrics
        .list
        .iter()
        .map(|m| m.key())
        .collect();
    let mut out = String::new();
    out.push_str(&format!("{:<14}", "Method"));
    for key in &metric_keys {
        out.push_str(&format!("{key:>16}"));
    }
    out.push('\n');
    for method in &report.config.methods {
        let name = method.display();
        out.push_str(&format!("{name:<14}"));
        let metrics = report.aggregated.get(name);
        for key in &metric_keys {
            match metrics.and_then(|m| m.get(*key)) {
                Some(agg) => {
                    out.push_str(&format!("{:>16}", format!("{:.2}±{:.2}", agg.mean, agg.std_error)))
                }
                None => out.push_str(&format!("{:>16}", "-")),
            }
        }
        out.push('\n');
    }
    out
}
