//! Run the Table-1 artificial benchmark and print the aggregated table.
//!
//! ```sh
//! cargo run --release -p dcsim-core --example table1 [trials] [base_seed]
//! ```

use std::path::Path;

use dcsim_core::config::ExperimentConfig;
use dcsim_core::experiment::{format_summary, run_experiment};

fn main() {
    let config_path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/artificial_table1.toml");
    let mut config = ExperimentConfig::load(&config_path).expect("config");
    let mut args = std::env::args().skip(1);
    if let Some(t) = args.next() {
        config.run.trials = t.parse().expect("trials");
    }
    if let Some(s) = args.next() {
        config.run.base_seed = s.parse().expect("seed");
    }
    let started = std::time::Instant::now();
    let (report, timings) = run_experiment(&config).expect("experiment");
    println!("{}", format_summary(&report));
    if !report.method_errors.is_empty() {
        println!("method errors: {:?}", report.method_errors);
    }
    println!(
        "total {:.1}s, per method: {:?}",
        started.elapsed().as_secs_f64(),
        timings
            .per_method_ms
            .iter()
            .map(|(k, v)| format!("{k}: {:.0}ms", v))
            .collect::<Vec<_>>()
    );
}
