//! Command-line experiment runner.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dcsim_core::config::ExperimentConfig;
use dcsim_core::error::Error;
use dcsim_core::experiment::{
    emit_report, emit_sweep, format_summary, parse_report, run_experiment, run_sweep,
};

#[derive(Parser)]
#[command(name = "dcsim", version, about = "Data collaboration analysis simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunOverrides {
    /// Override run.base_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override run.trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory for report files.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured method over the configured trials and write
    /// trials.csv, summary.csv, report.json and timings.json.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Run a (k, alpha) grid for the SMOTE anchor method and write
    /// sweep.csv (rows = k, columns = alpha).
    Sweep {
        config: PathBuf,
        /// Comma-separated neighbor counts, e.g. --k 1,5,25,99
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<usize>,
        /// Comma-separated extrapolation bounds, e.g. --alpha 0.5,1.0,1.5
        #[arg(long, value_delimiter = ',', required = true)]
        alpha: Vec<f64>,
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Parse and validate a config file without running anything.
    Validate { config: PathBuf },
    /// Print the aggregated table of a previously written report.json.
    Report { path: PathBuf },
}

fn load_config(path: &Path, overrides: Option<&RunOverrides>) -> Result<ExperimentConfig, Error> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(o) = overrides {
        if let Some(seed) = o.seed {
            config.run.base_seed = seed;
        }
        if let Some(trials) = o.trials {
            config.run.trials = trials;
        }
        config.validate()?;
    }
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidParam(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, overrides } => {
            let config = load_config(&config, Some(&overrides))?;
            let (report, timings) = run_experiment(&config)?;
            let files = emit_report(&report, &timings, &overrides.out_dir)?;
            print!("{}", format_summary(&report));
            if !report.method_errors.is_empty() {
                eprintln!("some methods failed: {:?}", report.method_errors);
            }
            println!(
                "wrote {}, {}, {}, {}",
                files.trials_csv.display(),
                files.summary_csv.display(),
                files.report_json.display(),
                files.timings_json.display()
            );
            Ok(())
        }
        Command::Sweep {
            config,
            k,
            alpha,
            overrides,
        } => {
            let config = load_config(&config, Some(&overrides))?;
            let grid = run_sweep(&config, &k, &alpha)?;
            let path = emit_sweep(&grid, &overrides.out_dir)?;
            for (i, k) in grid.k_values.iter().enumerate() {
                let row: Vec<String> = grid.mean_acc[i].iter().map(|v| format!("{v:.4}")).collect();
                println!("k={k:>4}: {}", row.join("  "));
            }
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Validate { config } => {
            load_config(&config, None)?;
            println!("config ok");
            Ok(())
        }
        Command::Report { path } => {
            let report = parse_report(&path)?;
            print!("{}", format_summary(&report));
            Ok(())
        }
    }
}
