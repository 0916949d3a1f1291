//! Model data: Lagrangian, Hamiltonian and terminal cost evaluators.
//!
//! Measure arguments are particle clouds. Measure derivatives are evaluated
//! at a particle `(y, b)` of the cloud and follow the lift convention: if a
//! cloud has `n` particles, `D_mu F(mu, y_j, b_j) = n * d/d(b_j) F(mu)`.
//!
//! Matrix-valued derivatives of a vector field `V` with respect to a variable
//! `z` are stored with entry `(r, c) = dV_r / dz_c`.

mod cloud;
mod derived;
mod lq;
mod wasserstein;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use cloud::{
    moment, AnyCloud, CloudView, MomentOrder, StateActionCloud, StateCloud, StateView,
};
pub use derived::{DerivedHamiltonian, InnerNewton, TanhLagrangian};
pub use lq::{LqHamiltonian, LqLagrangian, LqSpec, LqTerminal};
pub use wasserstein::{wasserstein, WassersteinOrder};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid cloud: {0}")]
    InvalidCloud(String),
    #[error("invalid model parameters: {0}")]
    InvalidSpec(String),
    #[error(
        "inner maximization diverged after {iterations} Newton steps (residual {residual:.3e})"
    )]
    InnerMaxDiverged { iterations: usize, residual: f64 },
    #[error("assignment needs equal cloud sizes, got {left} and {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("cloud of size {size} exceeds the exact assignment limit of {limit}")]
    CloudTooLarge { size: usize, limit: usize },
    #[error("clouds have different point dimensions ({left} and {right})")]
    DimensionMismatch { left: usize, right: usize },
}

/// Running cost `L(x, a, mu)` and its derivatives.
pub trait Lagrangian: Send + Sync {
    fn value(&self, x: &[f64], a: &[f64], mu: &CloudView) -> f64;
    fn d_a(&self, x: &[f64], a: &[f64], mu: &CloudView) -> DVector<f64>;
    fn d_x(&self, x: &[f64], a: &[f64], mu: &CloudView) -> DVector<f64>;
    fn d_aa(&self, x: &[f64], a: &[f64], mu: &CloudView) -> DMatrix<f64>;
    /// `d(D_a L)_r / dx_c`.
    fn d_xa(&self, x: &[f64], a: &[f64], mu: &CloudView) -> DMatrix<f64>;
    fn d_xx(&self, x: &[f64], a: &[f64], mu: &CloudView) -> DMatrix<f64>;
    /// `D^a_mu L(x, a, mu, y, b)`.
    fn dmu_a(&self, x: &[f64], a: &[f64], mu: &CloudView, y: &[f64], b: &[f64]) -> DVector<f64>;
    /// `D^x_mu L(x, a, mu, y, b)`.
    fn dmu_x(&self, x: &[f64], a: &[f64], mu: &CloudView, y: &[f64], b: &[f64]) -> DVector<f64>;
    /// `D^a_mu D_a L`: entry `(r, c)` is the lift derivative of `(D_a L)_r` in `b_c`.
    fn dmu_a_d_a(&self, x: &[f64], a: &[f64], mu: &CloudView, y: &[f64], b: &[f64])
        -> DMatrix<f64>;
    fn dmu_x_d_a(&self, x: &[f64], a: &[f64], mu: &CloudView, y: &[f64], b: &[f64])
        -> DMatrix<f64>;
    fn dmu_a_d_x(&self, x: &[f64], a: &[f64], mu: &CloudView, y: &[f64], b: &[f64])
        -> DMatrix<f64>;
    fn dmu_x_d_x(&self, x: &[f64], a: &[f64], mu: &CloudView, y: &[f64], b: &[f64])
        -> DMatrix<f64>;
}

/// Hamiltonian `H(x, p, mu) = sup_a { -a.p - L(x, a, mu) }` and derivatives.
///
/// Evaluators are fallible because derived Hamiltonians run an inner solve.
pub trait Hamiltonian: Send + Sync {
    fn value(&self, x: &[f64], p: &[f64], mu: &CloudView) -> Result<f64, ModelError>;
    fn d_p(&self, x: &[f64], p: &[f64], mu: &CloudView) -> Result<DVector<f64>, ModelError>;
    fn d_x(&self, x: &[f64], p: &[f64], mu: &CloudView) -> Result<DVector<f64>, ModelError>;
    fn d_pp(&self, x: &[f64], p: &[f64], mu: &CloudView) -> Result<DMatrix<f64>, ModelError>;
    /// `d(D_p H)_r / dx_c`.
    fn d_xp(&self, x: &[f64], p: &[f64], mu: &CloudView) -> Result<DMatrix<f64>, ModelError>;
    fn dmu_a(
        &self,
        x: &[f64],
        p: &[f64],
        mu: &CloudView,
        y: &[f64],
        b: &[f64],
    ) -> Result<DVector<f64>, ModelError>;
    fn dmu_x(
        &self,
        x: &[f64],
        p: &[f64],
        mu: &CloudView,
        y: &[f64],
        b: &[f64],
    ) -> Result<DVector<f64>, ModelError>;
    fn dmu_a_d_p(
        &self,
        x: &[f64],
        p: &[f64],
        mu: &CloudView,
        y: &[f64],
        b: &[f64],
    ) -> Result<DMatrix<f64>, ModelError>;
    fn dmu_x_d_p(
        &self,
        x: &[f64],
        p: &[f64],
        mu: &CloudView,
        y: &[f64],
        b: &[f64],
    ) -> Result<DMatrix<f64>, ModelError>;

    /// The optimal control `a* = -D_p H(x, p, mu)`.
    fn maximizer(&self, x: &[f64], p: &[f64], mu: &CloudView) -> Result<DVector<f64>, ModelError> {
        Ok(-self.d_p(x, p, mu)?)
    }
}

/// Terminal cost `G(x, m)` and derivatives.
pub trait TerminalCost: Send + Sync {
    fn value(&self, x: &[f64], m: &StateView) -> f64;
    fn d_x(&self, x: &[f64], m: &StateView) -> DVector<f64>;
    fn d_xx(&self, x: &[f64], m: &StateView) -> DMatrix<f64>;
    /// `D_m G(x, m, y)`.
    fn dm(&self, x: &[f64], m: &StateView, y: &[f64]) -> DVector<f64>;
    /// `D_m D_x G(x, m, y)`: entry `(r, c)` is the lift derivative of `(D_x G)_r` in `y_c`.
    fn dm_d_x(&self, x: &[f64], m: &StateView, y: &[f64]) -> DMatrix<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HamiltonianKind {
    Analytic,
    Derived,
}

/// Monotonicity constants `C_{L,a}`, `C_{L,x}`, `C_G`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonotonicityConstants {
    pub c_la: f64,
    pub c_lx: f64,
    pub c_g: f64,
}

/// A complete model: cost data, noise, horizon and optional known constants.
#[derive(Clone)]
pub struct Model {
    pub name: String,
    pub dim: usize,
    pub sigma0: f64,
    pub horizon: f64,
    pub lagrangian: Arc<dyn Lagrangian>,
    pub hamiltonian: Arc<dyn Hamiltonian>,
    pub terminal: Arc<dyn TerminalCost>,
    pub kind: HamiltonianKind,
    pub constants: Option<MonotonicityConstants>,
    /// Set only for the exact linear-quadratic family.
    pub lq: Option<LqSpec>,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("sigma0", &self.sigma0)
            .field("horizon", &self.horizon)
            .field("kind", &self.kind)
            .field("constants", &self.constants)
            .field("lq", &self.lq)
            .finish()
    }
}

fn check_common(dim: usize, sigma0: f64, horizon: f64) -> Result<(), ModelError> {
    if dim == 0 || dim > 3 {
        return Err(ModelError::InvalidSpec(format!(
            "dimension {dim} outside 1..=3"
        )));
    }
    if !(sigma0.is_finite() && sigma0 >= 0.0) {
        return Err(ModelError::InvalidSpec(format!(
            "sigma0 = {sigma0} must be >= 0"
        )));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(ModelError::InvalidSpec(format!(
            "horizon = {horizon} must be > 0"
        )));
    }
    Ok(())
}

/// The linear-quadratic family with closed-form Hamiltonian.
pub fn lq_model(spec: LqSpec, sigma0: f64, horizon: f64) -> Result<Model, ModelError> {
    spec.validate()?;
    check_common(spec.dim, sigma0, horizon)?;
    Ok(Model {
        name: "lq".into(),
        dim: spec.dim,
        sigma0,
        horizon,
        lagrangian: Arc::new(LqLagrangian(spec)),
        hamiltonian: Arc::new(LqHamiltonian(spec)),
        terminal: Arc::new(LqTerminal(spec)),
        kind: HamiltonianKind::Analytic,
        constants: Some(spec.declared_constants()),
        lq: Some(spec),
    })
}

/// The LQ family perturbed by `eps * sum_c tanh(a_c) abar_c`, with the
/// Hamiltonian obtained by inner Newton maximization.
pub fn nonlinear_model(
    eps: f64,
    base: LqSpec,
    sigma0: f64,
    horizon: f64,
) -> Result<Model, ModelError> {
    base.validate()?;
    check_common(base.dim, sigma0, horizon)?;
    if !eps.is_finite() {
        return Err(ModelError::InvalidSpec("eps must be finite".into()));
    }
    let lagrangian: Arc<dyn Lagrangian> = Arc::new(TanhLagrangian { base, eps });
    Ok(Model {
        name: "lq-tanh".into(),
        dim: base.dim,
        sigma0,
        horizon,
        hamiltonian: Arc::new(DerivedHamiltonian::new(lagrangian.clone())),
        lagrangian,
        terminal: Arc::new(LqTerminal(base)),
        kind: HamiltonianKind::Derived,
        constants: None,
        lq: None,
    })
}

/// Model with a user-supplied Lagrangian and terminal cost; the Hamiltonian
/// is derived by inner maximization.
pub fn custom_model(
    name: &str,
    dim: usize,
    lagrangian: Arc<dyn Lagrangian>,
    terminal: Arc<dyn TerminalCost>,
    sigma0: f64,
    horizon: f64,
) -> Result<Model, ModelError> {
    check_common(dim, sigma0, horizon)?;
    Ok(Model {
        name: name.into(),
        dim,
        sigma0,
        horizon,
        hamiltonian: Arc::new(DerivedHamiltonian::new(lagrangian.clone())),
        lagrangian,
        terminal,
        kind: HamiltonianKind::Derived,
        constants: None,
        lq: None,
    })
}

impl Model {
    /// Smallest eigenvalue of `D_aa L` at one point.
    pub fn control_convexity(&self, x: &[f64], a: &[f64], mu: &CloudView) -> f64 {
        let h = self.lagrangian.d_aa(x, a, mu);
        let sym = (&h + h.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }
}
