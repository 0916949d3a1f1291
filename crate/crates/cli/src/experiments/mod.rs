//! One runner per subcommand. Each writes its CSV files into the output
//! directory and returns the pass/fail bands it evaluated.

mod audit;
mod decay;
mod meanfield;
mod nash;

use std::path::{Path, PathBuf};

use mfgc::model::Model;
use mfgc::report::{write_json, Check, CsvTable, Summary};

use crate::config::{ConfigError, Experiment, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mfgc(#[from] mfgc::Error),
    #[error("{0}")]
    Unsupported(String),
}

macro_rules! from_library {
    ($($t:ty),*) => {$(
        impl From<$t> for RunError {
            fn from(e: $t) -> Self {
                RunError::Mfgc(e.into())
            }
        }
    )*};
}

from_library!(
    mfgc::ModelError,
    mfgc::FixedPointError,
    mfgc::MonotonicityError,
    mfgc::NashError,
    mfgc::MeanFieldError,
    std::io::Error
);

/// Shared state of one run.
pub struct Context<'a> {
    pub config: &'a ExperimentConfig,
    pub model: Model,
    pub out: PathBuf,
    summary: Summary,
}

impl Context<'_> {
    fn seed(&self) -> u64 {
        self.config.seed()
    }

    fn write(&mut self, name: &str, table: &CsvTable) -> Result<(), RunError> {
        table.write(&self.out.join(name))?;
        self.summary.files.push(name.to_string());
        Ok(())
    }

    fn check(&mut self, check: Check) {
        log::info!(
            "{}: {:.6e} in {} -> {}",
            check.name,
            check.value,
            check.band,
            if check.pass { "pass" } else { "FAIL" }
        );
        self.summary.check(check);
    }

    fn require_lq(&self, what: &str) -> Result<(), RunError> {
        if self.model.lq.is_none() {
            return Err(RunError::Unsupported(format!("{what} needs the lq model")));
        }
        Ok(())
    }
}

/// Runs `experiment` and writes `<experiment>.json` next to its CSV output.
pub fn run(
    experiment: Experiment,
    config: &ExperimentConfig,
    out: &Path,
) -> Result<Summary, RunError> {
    if let Some(declared) = config.experiment {
        if declared != experiment {
            return Err(RunError::Unsupported(format!(
                "config declares experiment `{declared}` but `{experiment}` was requested"
            )));
        }
    }
    std::fs::create_dir_all(out)?;
    let mut ctx = Context {
        config,
        model: config.build_model()?,
        out: out.to_path_buf(),
        summary: Summary::new(
            experiment.as_str(),
            &config.build_model()?.name,
            config.seed(),
        ),
    };
    match experiment {
        Experiment::FixedpointDecay => decay::run(&mut ctx)?,
        Experiment::MonotonicityAudit => audit::run(&mut ctx)?,
        Experiment::NashSolve => nash::solve(&mut ctx)?,
        Experiment::SdeNorms => nash::sde_norms(&mut ctx)?,
        Experiment::MasterResidual => meanfield::residual(&mut ctx)?,
        Experiment::Convergence => meanfield::convergence(&mut ctx)?,
        Experiment::MfgPicard => meanfield::picard(&mut ctx)?,
    }
    let summary = ctx.summary;
    write_json(&out.join(format!("{experiment}.json")), &summary)?;
    Ok(summary)
}

/// `strictly decreasing` band on a sequence indexed by `N`.
fn decreasing_check(name: &str, values: &[f64]) -> Check {
    let pass = mfgc::stats::strictly_decreasing(values);
    let last_ratio = match values {
        [.., a, b] if *a != 0.0 => b / a,
        _ => f64::NAN,
    };
    Check::new(
        name,
        last_ratio,
        "strictly decreasing in N",
        pass && values.len() >= 2,
    )
}
