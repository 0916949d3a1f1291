//! The N-player Nash system: explicit grid solver, LQ Riccati solution,
//! derivative decay diagnostics and closed-loop simulation.

mod decay;
mod field;
mod grid;
mod riccati;
mod sde;
mod snapshot;

pub(crate) use riccati::hermite;

use thiserror::Error;

use crate::fixedpoint::FixedPointError;

pub use decay::{derivative_decay_report, max_cross_gradient, DecayEntry, DecayProbes, IndexClass};
pub use field::{solve_nash_grid, solve_nash_grid_with, NashGridOptions, ValueField};
pub use grid::{Grid, CFL_SAFETY, NODE_BUDGET};
pub use riccati::{solve_nash_riccati, solve_nash_riccati_with_step, RiccatiSolution, RICCATI_DT};
pub use sde::{offdiag_gradient_energy, simulate_closed_loop, TrajectoryBatch};
pub use snapshot::{read_snapshot, write_snapshot, SnapshotSidecar};

#[derive(Debug, Error)]
pub enum NashError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("explicit scheme unstable at step {step} (t = {time:.4}): max |u| went from {previous_max:.3e} to {new_max:.3e}")]
    StabilityViolation {
        step: usize,
        time: f64,
        previous_max: f64,
        new_max: f64,
    },
    #[error("fixed point failed at grid point {coords:?}: {source}")]
    FixedPointFailure {
        coords: Vec<f64>,
        #[source]
        source: FixedPointError,
    },
    #[error("not a linear-quadratic model: {0}")]
    NonLqModel(String),
    #[error("outside the grid: {0}")]
    OutsideGrid(String),
    #[error("snapshot error: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
