//! The N-player best-response fixed point `a^N(x, p)`, the measure-level
//! map `Phi`, the monotone block matrices and implicit Jacobians.
//!
//! Two coupling conventions are used. [`solve_a_n`] evaluates player `i`
//! against the cloud of the other players, `m^{N,-i}_{x,a}`. [`solve_phi`]
//! evaluates every particle against the full cloud, itself included.

mod blocks;
mod decay;
mod solver;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::model::ModelError;

pub use blocks::{assemble_blocks, jacobian_p, jacobian_x, BlockMatrix, Flavor};
pub use decay::{
    first_order_table, hat_h, hat_h_ik, higher_derivatives, omega, DecayRow, Variable,
};
pub use solver::{solve_a_n, solve_a_n_with, solve_phi, solve_phi_with};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FixedPointError {
    #[error(
        "fixed point did not converge after {iterations} iterations (residual {residual:.3e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("block matrix M is singular (min eigenvalue of symmetric part {min_eigenvalue:.3e})")]
    SingularM { min_eigenvalue: f64 },
    #[error("invalid player vector: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `N` points of `R^d` stored row-major (`N >= 2`).
#[derive(Clone, Debug, PartialEq)]
pub struct PlayerVector {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PlayerVector {
    pub fn new(n: usize, dim: usize, data: Vec<f64>) -> Result<Self, FixedPointError> {
        if n < 2 {
            return Err(FixedPointError::InvalidInput(format!(
                "need at least 2 players, got {n}"
            )));
        }
        if dim == 0 || data.len() != n * dim {
            return Err(FixedPointError::InvalidInput(format!(
                "{} entries for {n} players of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FixedPointError::InvalidInput("non-finite entry".into()));
        }
        Ok(Self { n, dim, data })
    }

    pub fn zeros(n: usize, dim: usize) -> Self {
        Self {
            n,
            dim,
            data: vec![0.0; n * dim],
        }
    }

    /// Build from a scalar per player (`d = 1`).
    pub fn from_scalars(values: &[f64]) -> Result<Self, FixedPointError> {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn players(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// The vector with rows reordered so that row `i` of the result is row
    /// `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &src in perm {
            data.extend_from_slice(self.row(src));
        }
        Self {
            n: self.n,
            dim: self.dim,
            data,
        }
    }
}

/// Iteration strategy for the fixed-point solvers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Damped Picard, switching to Newton when progress stalls.
    DampedThenNewton,
    /// Damped Picard only.
    Damped,
    /// Newton from the initial sweep.
    Newton,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub theta: f64,
    pub max_iter: usize,
    /// Picard is declared stalled when the residual falls by less than
    /// `stall_factor` over `stall_window` iterations.
    pub stall_window: usize,
    pub stall_factor: f64,
    pub strategy: Strategy,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            theta: 0.5,
            max_iter: 10_000,
            stall_window: 20,
            stall_factor: 10.0,
            strategy: Strategy::DampedThenNewton,
        }
    }
}

impl FixedPointOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Damped,
    Newton,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointResult {
    pub actions: PlayerVector,
    /// `max_i |a^i + D_p H(x^i, p^i, m^{N,-i}_{x,a})|`.
    pub residual: f64,
    pub iterations: usize,
    pub method: Method,
}

fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}
