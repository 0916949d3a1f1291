//! Hamiltonians obtained from a Lagrangian by inner maximization, and the
//! tanh-perturbed LQ Lagrangian.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::lq::{vec, LqLagrangian, LqSpec};
use super::{CloudView, Hamiltonian, Lagrangian, ModelError};

/// Newton settings for `argmax_a { -a.p - L(x, a, mu) }`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerNewton {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for InnerNewton {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100,
        }
    }
}

/// `H(x, p, mu) = sup_a { -a.p - L(x, a, mu) }` evaluated numerically.
///
/// The maximizer solves `D_a L(x, a, mu) + p = 0`; derivatives of `H` follow
/// from the envelope theorem and implicit differentiation of that equation.
#[derive(Clone)]
pub struct DerivedHamiltonian {
    lagrangian: Arc<dyn Lagrangian>,
    newton: InnerNewton,
}

impl DerivedHamiltonian {
    pub fn new(lagrangian: Arc<dyn Lagrangian>) -> Self {
        Self {
            lagrangian,
            newton: InnerNewton::default(),
        }
    }

    pub fn with_newton(mut self, newton: InnerNewton) -> Self {
        self.newton = newton;
        self
    }

    fn argmax(&self, x: &[f64], p: &[f64], mu: &CloudView) -> Result<DVector<f64>, ModelError> {
        let l = &self.lagrangian;
        let pv = vec(p);
        let mut a = -pv.clone();
        let scale = 1.0 + pv.amax();
        let mut r = l.d_a(x, a.as_slice(), mu) + &pv;
        let mut rn = r.norm();
        for _ in 0..self.newton.max_iter {
            if rn <= self.newton.tol * scale {
                return Ok(a);
            }
            let hess = l.d_aa(x, a.as_slice(), mu);
            let step = hess
                .lu()
                .solve(&(-&r))
                .ok_or(ModelError::InnerMaxDiverged {
                    iterations: 0,
                    residual: rn,
                })?;
            // Halve the step until the first-order residual decreases.
            let mut t = 1.0;
            loop {
                let trial = &a + &step * t;
                let rt = l.d_a(x, trial.as_slice(), mu) + &pv;
                let rtn = rt.norm();
                if rtn < rn || t < 1e-6 {
                    a = trial;
                    r = rt;
                    rn = rtn;
                    break;
                }
                t *= 0.5;
            }
        }
        if rn <= self.newton.tol * scale {
            Ok(a)
        } else {
            Err(ModelError::InnerMaxDiverged {
                iterations: self.newton.max_iter,
                residual: rn,
            })
        }
    }

    fn inverse_hessian(
        &self,
        x: &[f64],
        a: &[f64],
        mu: &CloudView,
    ) -> Result<DMatrix<f64>, ModelError> {
        self.lagrangian
            .d_aa(x, a, mu)
            .try_inverse()
            .ok_or(ModelError::InnerMaxDiverged {
                iterations: 0,
                residual: f64::INFINITY,
            })
    }
}

impl Hamiltonian for DerivedHamiltonian {
    fn value(&self, x: &[f64], p: &[f64], mu: &CloudView) -> Result<f64, ModelError> {
        let a = self.argmax(x, p, mu)?;
        Ok(-a.dot(&vec(p)) - self.lagrangian.value(x, a.as_slice(), mu))
    }

    fn d_p(&self, x: &[f64], p: &[f64], mu: &CloudView) -> Result<DVector<f64>, ModelError> {
        Ok(-self.argmax(x, p, mu)?)
    }

    fn maximizer(&self, x: &[f64], p: &[f64], mu: &CloudView) -> Result<DVector<f64>, ModelError> {
        self.argmax(x, p, mu)
    }

    fn d_x(&self, x: &[f64], p: &[f64], mu: &CloudView) -> Result<DVector<f64>, ModelError> {
        let a = self.argmax(x, p, mu)?;
        Ok(-self.lagrangian.d_x(x, a.as_slice(), mu))
    }

    fn d_pp(&self, x: &[f64], p: &[f64], mu: &CloudView) -> Result<DMatrix<f64>, ModelError> {
        let a = self.argmax(x, p, mu)?;
        self.inverse_hessian(x, a.as_slice(), mu)
    }

    fn d_xp(&self, x: &[f64], p: &[f64], mu: &CloudView) -> Result<DMatrix<f64>, ModelError> {
        let a = self.argmax(x, p, mu)?;
        let inv = self.inverse_hessian(x, a.as_slice(), mu)?;
        Ok(inv * self.lagrangian.d_xa(x, a.as_slice(), mu))
    }

    fn dmu_a(
        &self,
        x: &[f64],
        p: &[f64],
        mu: &CloudView,
        y: &[f64],
        b: &[f64],
    ) -> Result<DVector<f64>, ModelError> {
        let a = self.argmax(x, p, mu)?;
        Ok(-self.lagrangian.dmu_a(x, a.as_slice(), mu, y, b))
    }

    fn dmu_x(
        &self,
        x: &[f64],
        p: &[f64],
        mu: &CloudView,
        y: &[f64],
        b: &[f64],
    ) -> Result<DVector<f64>, ModelError> {
        let a = self.argmax(x, p, mu)?;
        Ok(-self.lagrangian.dmu_x(x, a.as_slice(), mu, y, b))
    }

    fn dmu_a_d_p(
        &self,
        x: &[f64],
        p: &[f64],
        mu: &CloudView,
        y: &[f64],
        b: &[f64],
    ) -> Result<DMatrix<f64>, ModelError> {
        let a = self.argmax(x, p, mu)?;
        let inv = self.inverse_hessian(x, a.as_slice(), mu)?;
        Ok(inv * self.lagrangian.dmu_a_d_a(x, a.as_slice(), mu, y, b))
    }

    fn dmu_x_d_p(
        &self,
        x: &[f64],
        p: &[f64],
        mu: &CloudView,
        y: &[f64],
        b: &[f64],
    ) -> Result<DMatrix<f64>, ModelError> {
        let a = self.argmax(x, p, mu)?;
        let inv = self.inverse_hessian(x, a.as_slice(), mu)?;
        Ok(inv * self.lagrangian.dmu_x_d_a(x, a.as_slice(), mu, y, b))
    }
}

/// LQ Lagrangian plus `eps * sum_c tanh(a_c) abar_c`.
#[derive(Clone, Copy, Debug)]
pub struct TanhLagrangian {
    pub base: LqSpec,
    pub eps: f64,
}

fn sech2(v: f64) -> f64 {
    let c = v.cosh();
    1.0 / (c * c)
}

impl Lagrangian for TanhLagrangian {
    fn value(&self, x: &[f64], a: &[f64], mu: &CloudView) -> f64 {
        let abar = mu.mean_action();
        let pert: f64 = a.iter().zip(&abar).map(|(ac, mc)| ac.tanh() * mc).sum();
        LqLagrangian(self.base).value(x, a, mu) + self.eps * pert
    }

    fn d_a(&self, x: &[f64], a: &[f64], mu: &CloudView) -> DVector<f64> {
        let abar = mu.mean_action();
        let pert =
            DVector::from_iterator(a.len(), a.iter().zip(&abar).map(|(ac, mc)| sech2(*ac) * mc));
        LqLagrangian(self.base).d_a(x, a, mu) + pert * self.eps
    }

    fn d_x(&self, x: &[f64], a: &[f64], mu: &CloudView) -> DVector<f64> {
        LqLagrangian(self.base).d_x(x, a, mu)
    }

    fn d_aa(&self, x: &[f64], a: &[f64], mu: &CloudView) -> DMatrix<f64> {
        let abar = mu.mean_action();
        let diag = DVector::from_iterator(
            a.len(),
            a.iter()
                .zip(&abar)
                .map(|(ac, mc)| -2.0 * sech2(*ac) * ac.tanh() * mc),
        );
        LqLagrangian(self.base).d_aa(x, a, mu) + DMatrix::from_diagonal(&(diag * self.eps))
    }

    fn d_xa(&self, x: &[f64], a: &[f64], mu: &CloudView) -> DMatrix<f64> {
        LqLagrangian(self.base).d_xa(x, a, mu)
    }

    fn d_xx(&self, x: &[f64], a: &[f64], mu: &CloudView) -> DMatrix<f64> {
        LqLagrangian(self.base).d_xx(x, a, mu)
    }

    fn dmu_a(&self, x: &[f64], a: &[f64], mu: &CloudView, y: &[f64], b: &[f64]) -> DVector<f64> {
        let pert = DVector::from_iterator(a.len(), a.iter().map(|ac| ac.tanh()));
        LqLagrangian(self.base).dmu_a(x, a, mu, y, b) + pert * self.eps
    }

    fn dmu_x(&self, x: &[f64], a: &[f64], mu: &CloudView, y: &[f64], b: &[f64]) -> DVector<f64> {
        LqLagrangian(self.base).dmu_x(x, a, mu, y, b)
    }

    fn dmu_a_d_a(
        &self,
        x: &[f64],
        a: &[f64],
        mu: &CloudView,
        y: &[f64],
        b: &[f64],
    ) -> DMatrix<f64> {
        let diag = DVector::from_iterator(a.len(), a.iter().map(|ac| sech2(*ac)));
        LqLagrangian(self.base).dmu_a_d_a(x, a, mu, y, b)
            + DMatrix::from_diagonal(&(diag * self.eps))
    }

    fn dmu_x_d_a(
        &self,
        x: &[f64],
        a: &[f64],
        mu: &CloudView,
        y: &[f64],
        b: &[f64],
    ) -> DMatrix<f64> {
        LqLagrangian(self.base).dmu_x_d_a(x, a, mu, y, b)
    }

    fn dmu_a_d_x(
        &self,
        x: &[f64],
        a: &[f64],
        mu: &CloudView,
        y: &[f64],
        b: &[f64],
    ) -> DMatrix<f64> {
        LqLagrangian(self.base).dmu_a_d_x(x, a, mu, y, b)
    }

    fn dmu_x_d_x(
        &self,
        x: &[f64],
        a: &[f64],
        mu: &CloudView,
        y: &[f64],
        b: &[f64],
    ) -> DMatrix<f64> {
        LqLagrangian(self.base).dmu_x_d_x(x, a, mu, y, b)
    }
}
