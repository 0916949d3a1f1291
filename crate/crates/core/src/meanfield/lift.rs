//! The empirical master lift `U^N(t, x, m) = u^{N,1}(t, (x, y_1, ..., y_{N-1}))`.
//!
//! Measure derivatives at atom `j` of `m` are scaled from the player
//! derivatives of `u^{N,1}`:
//! `U_m = (N-1) D_{j+1} u`, `U_xm = (N-1) D_{j+1,1} u`,
//! `U_ym = (N-1) D_{j+1,j+1} u`, `U_mm(j, k) = (N-1)^2 D_{j+1,k+1} u` for `j != k`.

use nalgebra::{DMatrix, DVector};

use super::MeanFieldError;
use crate::model::{Model, StateView};
use crate::nash::{RiccatiSolution, ValueField};

/// A value function of `(t, x, m)` with the derivatives entering the master
/// equation. Measure derivatives are evaluated at atoms of `m`, by index.
pub trait MasterLift: Send + Sync {
    fn model(&self) -> &Model;
    /// Cloud size the lift accepts, if it is fixed.
    fn cloud_size(&self) -> Option<usize>;
    /// Times at which the lift is defined, if it is only defined on a mesh.
    fn time_nodes(&self) -> Option<Vec<f64>>;
    /// Nearest point of the spatial domain (identity for smooth lifts).
    fn snap(&self, point: &[f64]) -> Vec<f64>;
    /// Half-width of the spatial box, if the domain is bounded.
    fn domain_radius(&self) -> Option<f64>;

    fn value(&self, t: f64, x: &[f64], m: &StateView) -> Result<f64, MeanFieldError>;
    fn d_t(&self, t: f64, x: &[f64], m: &StateView) -> Result<f64, MeanFieldError>;
    fn d_x(&self, t: f64, x: &[f64], m: &StateView) -> Result<DVector<f64>, MeanFieldError>;
    fn d_xx(&self, t: f64, x: &[f64], m: &StateView) -> Result<DMatrix<f64>, MeanFieldError>;
    fn d_m(
        &self,
        t: f64,
        x: &[f64],
        m: &StateView,
        j: usize,
    ) -> Result<DVector<f64>, MeanFieldError>;
    /// `D_x D_m U`: entry `(r, c)` is `d(D_m U)_r / dx_c`.
    fn d_xm(
        &self,
        t: f64,
        x: &[f64],
        m: &StateView,
        j: usize,
    ) -> Result<DMatrix<f64>, MeanFieldError>;
    /// `D_y D_m U` at `y = y_j`.
    fn d_ym(
        &self,
        t: f64,
        x: &[f64],
        m: &StateView,
        j: usize,
    ) -> Result<DMatrix<f64>, MeanFieldError>;
    /// `D_mm U(y_j, y_k)`, defined for `j != k` only.
    fn d_mm(
        &self,
        t: f64,
        x: &[f64],
        m: &StateView,
        j: usize,
        k: usize,
    ) -> Result<DMatrix<f64>, MeanFieldError>;
}

/// A symmetric N-player solution evaluated at full configurations in `R^{N d}`.
pub trait PlayerField: Send + Sync {
    fn players(&self) -> usize;
    fn model(&self) -> &Model;
    fn time_nodes(&self) -> Option<Vec<f64>>;
    fn snap(&self, point: &[f64]) -> Vec<f64>;
    fn domain_radius(&self) -> Option<f64>;
    fn u(&self, t: f64, xs: &[f64]) -> Result<f64, MeanFieldError>;
    fn u_t(&self, t: f64, xs: &[f64]) -> Result<f64, MeanFieldError>;
    fn u_grad(&self, t: f64, xs: &[f64], j: usize) -> Result<DVector<f64>, MeanFieldError>;
    /// Entry `(r, c)` differentiates coordinate `r` of player `j` and
    /// coordinate `c` of player `k`.
    fn u_hess(
        &self,
        t: f64,
        xs: &[f64],
        j: usize,
        k: usize,
    ) -> Result<DMatrix<f64>, MeanFieldError>;
}

fn assemble<F: PlayerField + ?Sized>(
    f: &F,
    x: &[f64],
    m: &StateView,
) -> Result<Vec<f64>, MeanFieldError> {
    let n = f.players();
    let d = f.model().dim;
    if m.len() != n - 1 {
        return Err(MeanFieldError::WrongCloudSize {
            expected: n - 1,
            got: m.len(),
        });
    }
    if x.len() != d || m.dim() != d {
        return Err(MeanFieldError::InvalidInput(format!(
            "point of dimension {} and cloud of dimension {} for a model of dimension {d}",
            x.len(),
            m.dim()
        )));
    }
    let mut xs = Vec::with_capacity(n * d);
    xs.extend_from_slice(x);
    for y in m.iter() {
        xs.extend_from_slice(y);
    }
    Ok(xs)
}

fn atom(j: usize, m: &StateView) -> Result<usize, MeanFieldError> {
    if j >= m.len() {
        return Err(MeanFieldError::InvalidInput(format!(
            "atom {j} of a cloud with {} atoms",
            m.len()
        )));
    }
    Ok(j + 1)
}

impl<F: PlayerField> MasterLift for F {
    fn model(&self) -> &Model {
        PlayerField::model(self)
    }

    fn cloud_size(&self) -> Option<usize> {
        Some(self.players() - 1)
    }

    fn time_nodes(&self) -> Option<Vec<f64>> {
        PlayerField::time_nodes(self)
    }

    fn snap(&self, point: &[f64]) -> Vec<f64> {
        PlayerField::snap(self, point)
    }

    fn domain_radius(&self) -> Option<f64> {
        PlayerField::domain_radius(self)
    }

    fn value(&self, t: f64, x: &[f64], m: &StateView) -> Result<f64, MeanFieldError> {
        self.u(t, &assemble(self, x, m)?)
    }

    fn d_t(&self, t: f64, x: &[f64], m: &StateView) -> Result<f64, MeanFieldError> {
        self.u_t(t, &assemble(self, x, m)?)
    }

    fn d_x(&self, t: f64, x: &[f64], m: &StateView) -> Result<DVector<f64>, MeanFieldError> {
        self.u_grad(t, &assemble(self, x, m)?, 0)
    }

    fn d_xx(&self, t: f64, x: &[f64], m: &StateView) -> Result<DMatrix<f64>, MeanFieldError> {
        self.u_hess(t, &assemble(self, x, m)?, 0, 0)
    }

    fn d_m(
        &self,
        t: f64,
        x: &[f64],
        m: &StateView,
        j: usize,
    ) -> Result<DVector<f64>, MeanFieldError> {
        let s = (self.players() - 1) as f64;
        Ok(self.u_grad(t, &assemble(self, x, m)?, atom(j, m)?)? * s)
    }

    fn d_xm(
        &self,
        t: f64,
        x: &[f64],
        m: &StateView,
        j: usize,
    ) -> Result<DMatrix<f64>, MeanFieldError> {
        let s = (self.players() - 1) as f64;
        Ok(self.u_hess(t, &assemble(self, x, m)?, atom(j, m)?, 0)? * s)
    }

    fn d_ym(
        &self,
        t: f64,
        x: &[f64],
        m: &StateView,
        j: usize,
    ) -> Result<DMatrix<f64>, MeanFieldError> {
        let s = (self.players() - 1) as f64;
        let jj = atom(j, m)?;
        Ok(self.u_hess(t, &assemble(self, x, m)?, jj, jj)? * s)
    }

    fn d_mm(
        &self,
        t: f64,
        x: &[f64],
        m: &StateView,
        j: usize,
        k: usize,
    ) -> Result<DMatrix<f64>, MeanFieldError> {
        if j == k {
            return Err(MeanFieldError::CoincidentAtoms(j));
        }
        let s = (self.players() - 1) as f64;
        Ok(self.u_hess(t, &assemble(self, x, m)?, atom(j, m)?, atom(k, m)?)? * (s * s))
    }
}

/// Lift of a grid solution. Arguments must sit on grid nodes and times on
/// stored slices.
#[derive(Clone, Copy, Debug)]
pub struct GridLift<'a> {
    pub field: &'a ValueField,
}

impl<'a> GridLift<'a> {
    pub fn new(field: &'a ValueField) -> Self {
        Self { field }
    }

    fn slice_at(&self, t: f64) -> Result<usize, MeanFieldError> {
        let k = self.field.nearest_slice(t);
        if (self.field.time(k) - t).abs() > 1e-9 * self.field.grid.horizon().max(1.0) {
            return Err(MeanFieldError::OutOfDomain(format!(
                "t = {t} is not a stored time slice"
            )));
        }
        Ok(k)
    }

    fn node_at(&self, xs: &[f64]) -> Result<usize, MeanFieldError> {
        let g = &self.field.grid;
        if !g.is_node_point(xs, 1e-9 * g.spacing()) {
            return Err(MeanFieldError::OutOfDomain(format!(
                "{xs:?} is not a grid node"
            )));
        }
        Ok(g.nearest_node(xs))
    }
}

impl PlayerField for GridLift<'_> {
    fn players(&self) -> usize {
        self.field.players()
    }

    fn model(&self) -> &Model {
        &self.field.model
    }

    fn time_nodes(&self) -> Option<Vec<f64>> {
        Some(
            (0..self.field.slice_count())
                .map(|k| self.field.time(k))
                .collect(),
        )
    }

    fn snap(&self, point: &[f64]) -> Vec<f64> {
        let g = &self.field.grid;
        let h = g.spacing();
        let last = (g.points_per_axis - 1) as f64;
        point
            .iter()
            .map(|x| g.coordinate(((x + g.radius) / h).round().clamp(0.0, last) as usize))
            .collect()
    }

    fn domain_radius(&self) -> Option<f64> {
        Some(self.field.grid.radius)
    }

    fn u(&self, t: f64, xs: &[f64]) -> Result<f64, MeanFieldError> {
        let k = self.slice_at(t)?;
        Ok(self.field.slice(k)[self.node_at(xs)?])
    }

    /// Backward difference to the previous stored slice, which reproduces the
    /// explicit scheme's time update exactly when no slices were dropped.
    fn u_t(&self, t: f64, xs: &[f64]) -> Result<f64, MeanFieldError> {
        let k = self.slice_at(t)?;
        let node = self.node_at(xs)?;
        let (a, b) = if k == 0 { (0, 1) } else { (k - 1, k) };
        if self.field.slice_count() < 2 {
            return Err(MeanFieldError::OutOfDomain(
                "a single stored slice has no time derivative".into(),
            ));
        }
        let f = self.field;
        Ok((f.slice(b)[node] - f.slice(a)[node]) / (f.time(b) - f.time(a)))
    }

    fn u_grad(&self, t: f64, xs: &[f64], j: usize) -> Result<DVector<f64>, MeanFieldError> {
        let k = self.slice_at(t)?;
        Ok(DVector::from_vec(self.field.gradient(
            k,
            self.node_at(xs)?,
            0,
            j,
        )))
    }

    fn u_hess(
        &self,
        t: f64,
        xs: &[f64],
        j: usize,
        k: usize,
    ) -> Result<DMatrix<f64>, MeanFieldError> {
        let s = self.slice_at(t)?;
        Ok(self.field.hessian(s, self.node_at(xs)?, 0, j, k))
    }
}

/// Lift of the closed-form LQ Nash solution; defined everywhere.
#[derive(Clone, Debug)]
pub struct RiccatiLift {
    pub solution: RiccatiSolution,
    pub model: Model,
}

impl RiccatiLift {
    pub fn new(solution: RiccatiSolution, model: Model) -> Self {
        Self { solution, model }
    }
}

impl PlayerField for RiccatiLift {
    fn players(&self) -> usize {
        self.solution.players
    }

    fn model(&self) -> &Model {
        &self.model
    }

    fn time_nodes(&self) -> Option<Vec<f64>> {
        None
    }

    fn snap(&self, point: &[f64]) -> Vec<f64> {
        point.to_vec()
    }

    fn domain_radius(&self) -> Option<f64> {
        None
    }

    fn u(&self, t: f64, xs: &[f64]) -> Result<f64, MeanFieldError> {
        Ok(self.solution.value(t, xs))
    }

    fn u_t(&self, t: f64, xs: &[f64]) -> Result<f64, MeanFieldError> {
        Ok(self.solution.time_derivative(t, xs))
    }

    fn u_grad(&self, t: f64, xs: &[f64], j: usize) -> Result<DVector<f64>, MeanFieldError> {
        Ok(DVector::from_vec(self.solution.gradient(t, xs, j)))
    }

    fn u_hess(
        &self,
        t: f64,
        _xs: &[f64],
        j: usize,
        k: usize,
    ) -> Result<DMatrix<f64>, MeanFieldError> {
        Ok(self.solution.hessian(t, j, k))
    }
}
