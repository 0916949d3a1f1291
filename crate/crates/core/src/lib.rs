//! Numerical toolkit for mean field games of controls.
//!
//! - [`model`]: cost data (Lagrangian, Hamiltonian, terminal cost), the
//!   bundled `lq` and `lq-tanh` families, particle clouds and Wasserstein
//!   distances.
//! - [`fixedpoint`]: the N-player best-response fixed point, the
//!   measure-level map, block matrices and implicit Jacobians.
//! - [`monotonicity`]: sampled audits of the monotonicity conditions.
//! - [`nash`]: grid and Riccati solvers for the N-player Nash system and
//!   closed-loop simulation.
//! - [`meanfield`]: the empirical master-equation lift, residuals, the LQ
//!   master solution and a one-dimensional Picard solver.

pub mod fixedpoint;
pub mod meanfield;
pub mod model;
pub mod monotonicity;
pub mod nash;
pub mod par;
pub mod report;
pub mod stats;

pub use fixedpoint::FixedPointError;
pub use meanfield::MeanFieldError;
pub use model::ModelError;
pub use monotonicity::MonotonicityError;
pub use nash::NashError;

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    FixedPoint(#[from] FixedPointError),
    #[error(transparent)]
    Monotonicity(#[from] MonotonicityError),
    #[error(transparent)]
    Nash(#[from] NashError),
    #[error(transparent)]
    MeanField(#[from] MeanFieldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
