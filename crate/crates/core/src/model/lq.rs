//! Linear-quadratic model family.
//!
//! `L(x, a, mu) = |a|^2/2 + lambda a.abar + c_x |x - q_x xbar|^2 / 2`,
//! `G(x, m) = c_g |x - q_g xbar|^2 / 2`, where `abar` and `xbar` are cloud means.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    CloudView, Hamiltonian, Lagrangian, ModelError, MonotonicityConstants, StateView, TerminalCost,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LqSpec {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub lambda: f64,
    pub c_x: f64,
    pub q_x: f64,
    pub c_g: f64,
    pub q_g: f64,
}

fn default_dim() -> usize {
    1
}

impl Default for LqSpec {
    fn default() -> Self {
        Self {
            dim: 1,
            lambda: 0.0,
            c_x: 0.0,
            q_x: 0.0,
            c_g: 0.0,
            q_g: 0.0,
        }
    }
}

impl LqSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        let vals = [self.lambda, self.c_x, self.q_x, self.c_g, self.q_g];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidSpec("non-finite LQ coefficient".into()));
        }
        if self.c_x < 0.0 || self.c_g < 0.0 {
            return Err(ModelError::InvalidSpec("c_x and c_g must be >= 0".into()));
        }
        Ok(())
    }

    /// Constants valid for this family: `C_{L,a} = 1 - |lambda|`,
    /// `C_{L,x} = c_x (q_x - 1)^+`, `C_G = c_g (q_g - 1)^+`.
    pub fn declared_constants(&self) -> MonotonicityConstants {
        MonotonicityConstants {
            c_la: 1.0 - self.lambda.abs(),
            c_lx: self.c_x * (self.q_x - 1.0).max(0.0),
            c_g: self.c_g * (self.q_g - 1.0).max(0.0),
        }
    }
}

pub(crate) fn vec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn sq(v: &DVector<f64>) -> f64 {
    v.norm_squared()
}

/// `x - q * xbar`.
fn shifted(x: &[f64], q: f64, xbar: &[f64]) -> DVector<f64> {
    DVector::from_iterator(x.len(), x.iter().zip(xbar).map(|(xi, mi)| xi - q * mi))
}

#[derive(Clone, Copy, Debug)]
pub struct LqLagrangian(pub LqSpec);

#[derive(Clone, Copy, Debug)]
pub struct LqHamiltonian(pub LqSpec);

#[derive(Clone, Copy, Debug)]
pub struct LqTerminal(pub LqSpec);

impl Lagrangian for LqLagrangian {
    fn value(&self, x: &[f64], a: &[f64], mu: &CloudView) -> f64 {
        let s = &self.0;
        let abar = mu.mean_action();
        let av = vec(a);
        0.5 * sq(&av)
            + s.lambda * av.dot(&vec(&abar))
            + 0.5 * s.c_x * sq(&shifted(x, s.q_x, &mu.mean_state()))
    }

    fn d_a(&self, _x: &[f64], a: &[f64], mu: &CloudView) -> DVector<f64> {
        vec(a) + vec(&mu.mean_action()) * self.0.lambda
    }

    fn d_x(&self, x: &[f64], _a: &[f64], mu: &CloudView) -> DVector<f64> {
        shifted(x, self.0.q_x, &mu.mean_state()) * self.0.c_x
    }

    fn d_aa(&self, x: &[f64], _a: &[f64], _mu: &CloudView) -> DMatrix<f64> {
        DMatrix::identity(x.len(), x.len())
    }

    fn d_xa(&self, x: &[f64], _a: &[f64], _mu: &CloudView) -> DMatrix<f64> {
        DMatrix::zeros(x.len(), x.len())
    }

    fn d_xx(&self, x: &[f64], _a: &[f64], _mu: &CloudView) -> DMatrix<f64> {
        DMatrix::identity(x.len(), x.len()) * self.0.c_x
    }

    fn dmu_a(
        &self,
        _x: &[f64],
        a: &[f64],
        _mu: &CloudView,
        _y: &[f64],
        _b: &[f64],
    ) -> DVector<f64> {
        vec(a) * self.0.lambda
    }

    fn dmu_x(&self, x: &[f64], _a: &[f64], mu: &CloudView, _y: &[f64], _b: &[f64]) -> DVector<f64> {
        let s = &self.0;
        shifted(x, s.q_x, &mu.mean_state()) * (-s.c_x * s.q_x)
    }

    fn dmu_a_d_a(
        &self,
        x: &[f64],
        _a: &[f64],
        _mu: &CloudView,
        _y: &[f64],
        _b: &[f64],
    ) -> DMatrix<f64> {
        DMatrix::identity(x.len(), x.len()) * self.0.lambda
    }

    fn dmu_x_d_a(
        &self,
        x: &[f64],
        _a: &[f64],
        _mu: &CloudView,
        _y: &[f64],
        _b: &[f64],
    ) -> DMatrix<f64> {
        DMatrix::zeros(x.len(), x.len())
    }

    fn dmu_a_d_x(
        &self,
        x: &[f64],
        _a: &[f64],
        _mu: &CloudView,
        _y: &[f64],
        _b: &[f64],
    ) -> DMatrix<f64> {
        DMatrix::zeros(x.len(), x.len())
    }

    fn dmu_x_d_x(
        &self,
        x: &[f64],
        _a: &[f64],
        _mu: &CloudView,
        _y: &[f64],
        _b: &[f64],
    ) -> DMatrix<f64> {
        DMatrix::identity(x.len(), x.len()) * (-self.0.c_x * self.0.q_x)
    }
}

impl Hamiltonian for LqHamiltonian {
    fn value(&self, x: &[f64], p: &[f64], mu: &CloudView) -> Result<f64, ModelError> {
        let s = &self.0;
        let shifted_p = vec(p) + vec(&mu.mean_action()) * s.lambda;
        Ok(0.5 * sq(&shifted_p) - 0.5 * s.c_x * sq(&shifted(x, s.q_x, &mu.mean_state())))
    }

    fn d_p(&self, _x: &[f64], p: &[f64], mu: &CloudView) -> Result<DVector<f64>, ModelError> {
        Ok(vec(p) + vec(&mu.mean_action()) * self.0.lambda)
    }

    fn d_x(&self, x: &[f64], _p: &[f64], mu: &CloudView) -> Result<DVector<f64>, ModelError> {
        Ok(shifted(x, self.0.q_x, &mu.mean_state()) * (-self.0.c_x))
    }

    fn d_pp(&self, x: &[f64], _p: &[f64], _mu: &CloudView) -> Result<DMatrix<f64>, ModelError> {
        Ok(DMatrix::identity(x.len(), x.len()))
    }

    fn d_xp(&self, x: &[f64], _p: &[f64], _mu: &CloudView) -> Result<DMatrix<f64>, ModelError> {
        Ok(DMatrix::zeros(x.len(), x.len()))
    }

    fn dmu_a(
        &self,
        _x: &[f64],
        p: &[f64],
        mu: &CloudView,
        _y: &[f64],
        _b: &[f64],
    ) -> Result<DVector<f64>, ModelError> {
        let l = self.0.lambda;
        Ok((vec(p) + vec(&mu.mean_action()) * l) * l)
    }

    fn dmu_x(
        &self,
        x: &[f64],
        _p: &[f64],
        mu: &CloudView,
        _y: &[f64],
        _b: &[f64],
    ) -> Result<DVector<f64>, ModelError> {
        let s = &self.0;
        Ok(shifted(x, s.q_x, &mu.mean_state()) * (s.c_x * s.q_x))
    }

    fn dmu_a_d_p(
        &self,
        x: &[f64],
        _p: &[f64],
        _mu: &CloudView,
        _y: &[f64],
        _b: &[f64],
    ) -> Result<DMatrix<f64>, ModelError> {
        Ok(DMatrix::identity(x.len(), x.len()) * self.0.lambda)
    }

    fn dmu_x_d_p(
        &self,
        x: &[f64],
        _p: &[f64],
        _mu: &CloudView,
        _y: &[f64],
        _b: &[f64],
    ) -> Result<DMatrix<f64>, ModelError> {
        Ok(DMatrix::zeros(x.len(), x.len()))
    }
}

impl TerminalCost for LqTerminal {
    fn value(&self, x: &[f64], m: &StateView) -> f64 {
        0.5 * self.0.c_g * sq(&shifted(x, self.0.q_g, &m.mean()))
    }

    fn d_x(&self, x: &[f64], m: &StateView) -> DVector<f64> {
        shifted(x, self.0.q_g, &m.mean()) * self.0.c_g
    }

    fn d_xx(&self, x: &[f64], _m: &StateView) -> DMatrix<f64> {
        DMatrix::identity(x.len(), x.len()) * self.0.c_g
    }

    fn dm(&self, x: &[f64], m: &StateView, _y: &[f64]) -> DVector<f64> {
        let s = &self.0;
        shifted(x, s.q_g, &m.mean()) * (-s.c_g * s.q_g)
    }

    fn dm_d_x(&self, x: &[f64], _m: &StateView, _y: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(x.len(), x.len()) * (-self.0.c_g * self.0.q_g)
    }
}
