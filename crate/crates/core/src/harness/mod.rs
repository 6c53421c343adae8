//! Experiment harness: configuration files, replica runs and reports.

pub mod config;
pub mod experiments;
pub mod report;
pub mod stats;

use std::path::Path;

pub use config::{parse_config, parse_config_str, ExperimentConfig, ExperimentId};
pub use report::{Check, StatReport, Verdict};
pub use stats::ks_statistic;

use crate::error::Result;

/// Runs the configured experiment. When `out_dir` is given, CSV outputs and
/// `summary.txt` are written there (the directory is created if needed).
pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<StatReport> {
    let result = experiments::run(config)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        for (name, contents) in &result.outputs {
            std::fs::write(dir.join(name), contents)?;
        }
    }
    Ok(result.report)
}
