//! The empirical master lift, master-equation residuals, the LQ master
//! solution, N-to-mean-field convergence and a one-dimensional Picard solver.

mod convergence;
mod lift;
mod master_lq;
mod picard;
mod residual;

use thiserror::Error;

use crate::fixedpoint::FixedPointError;
use crate::model::ModelError;
use crate::nash::NashError;

pub use convergence::{convergence_report, quantile_cloud, ConvergenceProbes, ConvergenceRow};
pub use lift::{GridLift, MasterLift, PlayerField, RiccatiLift};
pub use master_lq::{solve_master_lq, MasterLq};
pub use picard::{
    flow_gap, picard_step_distance, solve_mfgc_picard, InitialDensity, InitialGuess, MfgcSolution,
    PicardGrid, PicardOptions,
};
pub use residual::{
    master_residual, residual_probes, ProbeSpec, ResidualProbe, ResidualRow, ResidualTerms,
    PROBE_FRACTION,
};

#[derive(Debug, Error)]
pub enum MeanFieldError {
    #[error("cloud has {got} atoms, the lift needs {expected}")]
    WrongCloudSize { expected: usize, got: usize },
    #[error("argument outside the lift's domain: {0}")]
    OutOfDomain(String),
    #[error("second measure derivative requested at coincident atoms (index {0})")]
    CoincidentAtoms(usize),
    #[error("not a linear-quadratic model: {0}")]
    NonLqModel(String),
    #[error("Picard iteration stalled after {iterations} iterations (last change {distance:.3e})")]
    PicardStalled { iterations: usize, distance: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    FixedPoint(#[from] FixedPointError),
    #[error(transparent)]
    Nash(#[from] NashError),
}
