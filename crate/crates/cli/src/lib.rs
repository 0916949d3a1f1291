//! Experiment runner behind the `mfgc` binary.
//!
//! Exit codes: 0 when every band passes, 2 when a run finished but some band
//! failed, 1 on configuration or execution errors.

pub mod config;
pub mod experiments;
pub mod plot;

use std::path::{Path, PathBuf};

use mfgc::report::Summary;

pub use config::{ConfigError, Experiment, ExperimentConfig};
pub use experiments::RunError;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAILED_BANDS: i32 = 2;

/// Loads `config_path`, applies the command-line overrides and runs.
/// The experiment comes from `experiment` or, failing that, the config.
pub fn execute(
    experiment: Option<Experiment>,
    config_path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<Summary, RunError> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(seed) = seed {
        config.seed = Some(seed);
    }
    let experiment = experiment.or(config.experiment).ok_or_else(|| {
        RunError::Unsupported(format!(
            "{}: no experiment given on the command line or in the config",
            config_path.display()
        ))
    })?;
    let out = out.unwrap_or_else(|| config.output_dir.clone());
    experiments::run(experiment, &config, &out)
}

pub fn exit_code(result: &Result<Summary, RunError>) -> i32 {
    match result {
        Ok(s) if s.pass => EXIT_PASS,
        Ok(_) => EXIT_FAILED_BANDS,
        Err(_) => EXIT_ERROR,
    }
}
