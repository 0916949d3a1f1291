//! Closed-form master solution for the linear-quadratic family.
//!
//! The master equation closes on quadratics in `(x, x̄)`:
//! `U(t, x, m) = α|x|²/2 + β x·x̄ + γ|x̄|²/2 + ρ` with `x̄` the mean of `m`.
//! Writing `s = α + β` and `w = β − λ s / (1 + λ)`, substitution gives
//!
//! ```text
//! α' = α² − c_x
//! β' = α w + c_x q_x + s β / (1 + λ)
//! γ' = w² − c_x q_x² + 2 s γ / (1 + λ)
//! ρ' = −d ((1 + σ0) α + σ0 (γ + 2β))
//! ```
//!
//! with `α(T) = c_g`, `β(T) = −c_g q_g`, `γ(T) = c_g q_g²`, `ρ(T) = 0`.

use nalgebra::{DMatrix, DVector};

use super::{MasterLift, MeanFieldError};
use crate::model::{LqSpec, Model, StateView};
use crate::nash::{hermite, RICCATI_DT};

type State = [f64; 4];

#[derive(Clone, Debug)]
pub struct MasterLq {
    pub model: Model,
    pub spec: LqSpec,
    pub step: f64,
    states: Vec<State>,
    rates: Vec<State>,
}

fn rhs(spec: &LqSpec, dim: usize, sigma0: f64, y: &State) -> State {
    let [alpha, beta, gamma, _] = *y;
    let lam = spec.lambda;
    let s = alpha + beta;
    let w = beta - lam * s / (1.0 + lam);
    [
        alpha * alpha - spec.c_x,
        alpha * w + spec.c_x * spec.q_x + s * beta / (1.0 + lam),
        w * w - spec.c_x * spec.q_x * spec.q_x + 2.0 * s * gamma / (1.0 + lam),
        -(dim as f64) * ((1.0 + sigma0) * alpha + sigma0 * (gamma + 2.0 * beta)),
    ]
}

fn axpy(y: &State, k: &State, h: f64) -> State {
    [
        y[0] + h * k[0],
        y[1] + h * k[1],
        y[2] + h * k[2],
        y[3] + h * k[3],
    ]
}

/// Integrates the coefficient ODEs backward from `T` with RK4.
pub fn solve_master_lq(model: &Model) -> Result<MasterLq, MeanFieldError> {
    let spec = model.lq.ok_or_else(|| {
        MeanFieldError::NonLqModel(format!("model '{}' is not linear-quadratic", model.name))
    })?;
    let steps = (model.horizon / RICCATI_DT - 1e-9).ceil().max(1.0) as usize;
    let h = model.horizon / steps as f64;
    let f = |y: &State| rhs(&spec, model.dim, model.sigma0, y);
    let mut y: State = [
        spec.c_g,
        -spec.c_g * spec.q_g,
        spec.c_g * spec.q_g * spec.q_g,
        0.0,
    ];
    let mut states = vec![y];
    let mut rates = vec![f(&y)];
    for _ in 0..steps {
        let k1 = f(&y);
        let k2 = f(&axpy(&y, &k1, -0.5 * h));
        let k3 = f(&axpy(&y, &k2, -0.5 * h));
        let k4 = f(&axpy(&y, &k3, -h));
        for c in 0..4 {
            y[c] -= h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        states.push(y);
        rates.push(f(&y));
    }
    states.reverse();
    rates.reverse();
    Ok(MasterLq {
        model: model.clone(),
        spec,
        step: h,
        states,
        rates,
    })
}

impl MasterLq {
    /// `(α, β, γ, ρ)` at time `t`.
    pub fn coefficients(&self, t: f64) -> State {
        let last = self.states.len() - 1;
        let s = (t / self.step).clamp(0.0, last as f64);
        let k = (s.floor() as usize).min(last - 1);
        let (h00, h10, h01, h11) = hermite(s - k as f64);
        let (a, b, da, db) = (
            &self.states[k],
            &self.states[k + 1],
            &self.rates[k],
            &self.rates[k + 1],
        );
        std::array::from_fn(|c| {
            h00 * a[c] + h10 * self.step * da[c] + h01 * b[c] + h11 * self.step * db[c]
        })
    }

    /// Time derivatives of the coefficients at `t`.
    pub fn coefficient_rates(&self, t: f64) -> State {
        rhs(
            &self.spec,
            self.model.dim,
            self.model.sigma0,
            &self.coefficients(t),
        )
    }

    fn eye(&self) -> DMatrix<f64> {
        DMatrix::identity(self.model.dim, self.model.dim)
    }

    fn quadratic(c: &State, x: &[f64], xbar: &[f64]) -> f64 {
        let xx: f64 = x.iter().map(|v| v * v).sum();
        let xm: f64 = x.iter().zip(xbar).map(|(a, b)| a * b).sum();
        let mm: f64 = xbar.iter().map(|v| v * v).sum();
        0.5 * c[0] * xx + c[1] * xm + 0.5 * c[2] * mm + c[3]
    }
}

impl MasterLift for MasterLq {
    fn model(&self) -> &Model {
        &self.model
    }

    fn cloud_size(&self) -> Option<usize> {
        None
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

    fn value(&self, t: f64, x: &[f64], m: &StateView) -> Result<f64, MeanFieldError> {
        Ok(Self::quadratic(&self.coefficients(t), x, &m.mean()))
    }

    fn d_t(&self, t: f64, x: &[f64], m: &StateView) -> Result<f64, MeanFieldError> {
        Ok(Self::quadratic(&self.coefficient_rates(t), x, &m.mean()))
    }

    fn d_x(&self, t: f64, x: &[f64], m: &StateView) -> Result<DVector<f64>, MeanFieldError> {
        let [a, b, _, _] = self.coefficients(t);
        let xbar = m.mean();
        Ok(DVector::from_iterator(
            x.len(),
            x.iter().zip(&xbar).map(|(x, y)| a * x + b * y),
        ))
    }

    fn d_xx(&self, t: f64, _x: &[f64], _m: &StateView) -> Result<DMatrix<f64>, MeanFieldError> {
        Ok(self.eye() * self.coefficients(t)[0])
    }

    fn d_m(
        &self,
        t: f64,
        x: &[f64],
        m: &StateView,
        _j: usize,
    ) -> Result<DVector<f64>, MeanFieldError> {
        let [_, b, g, _] = self.coefficients(t);
        let xbar = m.mean();
        Ok(DVector::from_iterator(
            x.len(),
            x.iter().zip(&xbar).map(|(x, y)| b * x + g * y),
        ))
    }

    fn d_xm(
        &self,
        t: f64,
        _x: &[f64],
        _m: &StateView,
        _j: usize,
    ) -> Result<DMatrix<f64>, MeanFieldError> {
        Ok(self.eye() * self.coefficients(t)[1])
    }

    fn d_ym(
        &self,
        _t: f64,
        _x: &[f64],
        _m: &StateView,
        _j: usize,
    ) -> Result<DMatrix<f64>, MeanFieldError> {
        Ok(DMatrix::zeros(self.model.dim, self.model.dim))
    }

    fn d_mm(
        &self,
        t: f64,
        _x: &[f64],
        _m: &StateView,
        j: usize,
        k: usize,
    ) -> Result<DMatrix<f64>, MeanFieldError> {
        if j == k {
            return Err(MeanFieldError::CoincidentAtoms(j));
        }
        Ok(self.eye() * self.coefficients(t)[2])
    }
}
