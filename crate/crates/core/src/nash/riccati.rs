//! Closed-form Nash solution for the linear-quadratic family.
//!
//! With LQ data the first player's value is a quadratic form
//! `u^{N,1}(t, x) = x^T (P(t) (x) I_d) x / 2 + q(t).x + r(t)` with `q = 0`,
//! where `P` is an `N x N` symmetric matrix, exchangeable in players `2..N`.
//! Substituting the ansatz in the Nash system gives, with
//! `kappa = lambda / (N - 1)`, `M = (1 - kappa) I + kappa J`,
//! `A_{j, s_j(k)} = P_{1k}` (`s_j` exchanges 1 and j), `K = M^{-1} A`,
//! `S = I - e_1 e_1^T`, `e = e_1 - q_x/(N-1) sum_{j>1} e_j`:
//!
//! `P' = K_1^T K_1 - c_x e e^T + K^T S P + P S K`,
//! `r' = -d (tr P + sigma0 1^T P 1)`,
//!
//! and the feedback is `a = -(K (x) I_d) x`.

use nalgebra::{DMatrix, DVector};

use super::NashError;
use crate::fixedpoint::{solve_a_n, PlayerVector};
use crate::model::{CloudView, LqSpec, Model};

/// Default RK4 step.
pub const RICCATI_DT: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct RiccatiSolution {
    pub players: usize,
    pub dim: usize,
    pub horizon: f64,
    pub sigma0: f64,
    pub spec: LqSpec,
    /// Uniform step; node `k` sits at time `k * step`.
    pub step: f64,
    p: Vec<DMatrix<f64>>,
    dp: Vec<DMatrix<f64>>,
    r: Vec<f64>,
}

struct Coefficients {
    n: usize,
    dim: usize,
    sigma0: f64,
    spec: LqSpec,
    m_inv: DMatrix<f64>,
    e: DVector<f64>,
}

impl Coefficients {
    fn new(spec: LqSpec, n: usize, dim: usize, sigma0: f64) -> Result<Self, NashError> {
        let kappa = spec.lambda / (n - 1) as f64;
        let m = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { kappa });
        let m_inv = m.try_inverse().ok_or_else(|| {
            NashError::NonLqModel(format!(
                "singular action coupling for lambda = {}",
                spec.lambda
            ))
        })?;
        let mut e = DVector::from_element(n, -spec.q_x / (n - 1) as f64);
        e[0] = 1.0;
        Ok(Self {
            n,
            dim,
            sigma0,
            spec,
            m_inv,
            e,
        })
    }

    /// Feedback matrix `K` with `a = -K x` (per coordinate).
    fn feedback(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n;
        let swap = |j: usize, k: usize| -> usize {
            if k == 0 {
                j
            } else if k == j {
                0
            } else {
                k
            }
        };
        let a = DMatrix::from_fn(n, n, |j, col| {
            // A_{j, s_j(k)} = P_{1k}  <=>  A_{j, col} = P_{1, s_j(col)}.
            p[(0, swap(j, col))]
        });
        &self.m_inv * a
    }

    fn rhs(&self, p: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
        let n = self.n;
        let k = self.feedback(p);
        let k0 = k.row(0).transpose();
        let mut s = DMatrix::identity(n, n);
        s[(0, 0)] = 0.0;
        let sp = &s * p;
        let ks = k.transpose() * &sp;
        let dp = &k0 * k0.transpose() - (&self.e * self.e.transpose()) * self.spec.c_x
            + &ks
            + ks.transpose();
        let ones_p_ones: f64 = p.iter().sum();
        let dr = -(self.dim as f64) * (p.trace() + self.sigma0 * ones_p_ones);
        (dp, dr)
    }

    fn terminal(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut g = DVector::from_element(n, -self.spec.q_g / (n - 1) as f64);
        g[0] = 1.0;
        (&g * g.transpose()) * self.spec.c_g
    }
}

/// Integrates the Riccati system backward from the terminal condition with
/// RK4 at step [`RICCATI_DT`].
pub fn solve_nash_riccati(model: &Model, players: usize) -> Result<RiccatiSolution, NashError> {
    solve_nash_riccati_with_step(model, players, RICCATI_DT)
}

pub fn solve_nash_riccati_with_step(
    model: &Model,
    players: usize,
    step: f64,
) -> Result<RiccatiSolution, NashError> {
    let spec = model.lq.ok_or_else(|| {
        NashError::NonLqModel(format!("model '{}' is not linear-quadratic", model.name))
    })?;
    if players < 2 {
        return Err(NashError::InvalidGrid(format!(
            "need at least 2 players, got {players}"
        )));
    }
    let co = Coefficients::new(spec, players, model.dim, model.sigma0)?;
    let steps = (model.horizon / step - 1e-9).ceil().max(1.0) as usize;
    let h = model.horizon / steps as f64;
    let mut p = co.terminal();
    let mut r = 0.0;
    let mut ps = vec![p.clone()];
    let (d0, _) = co.rhs(&p);
    let mut dps = vec![d0];
    let mut rs = vec![r];
    for _ in 0..steps {
        // Backward in time: integrate dY/dt = F(Y) with step -h.
        let (k1, l1) = co.rhs(&p);
        let (k2, l2) = co.rhs(&(&p - &k1 * (0.5 * h)));
        let (k3, l3) = co.rhs(&(&p - &k2 * (0.5 * h)));
        let (k4, l4) = co.rhs(&(&p - &k3 * h));
        p -= (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        p = (&p + p.transpose()) * 0.5;
        r -= (l1 + 2.0 * l2 + 2.0 * l3 + l4) * (h / 6.0);
        let (dpk, _) = co.rhs(&p);
        ps.push(p.clone());
        dps.push(dpk);
        rs.push(r);
    }
    ps.reverse();
    dps.reverse();
    rs.reverse();
    Ok(RiccatiSolution {
        players,
        dim: model.dim,
        horizon: model.horizon,
        sigma0: model.sigma0,
        spec,
        step: h,
        p: ps,
        dp: dps,
        r: rs,
    })
}

impl RiccatiSolution {
    fn coefficients(&self) -> Coefficients {
        Coefficients::new(self.spec, self.players, self.dim, self.sigma0)
            .expect("validated at construction")
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let last = self.p.len() - 1;
        let s = (t / self.step).clamp(0.0, last as f64);
        let k = (s.floor() as usize).min(last.saturating_sub(1));
        (k, s - k as f64)
    }

    /// `P(t)` by cubic Hermite interpolation between RK4 nodes.
    pub fn p(&self, t: f64) -> DMatrix<f64> {
        let (k, s) = self.locate(t);
        if self.p.len() == 1 {
            return self.p[0].clone();
        }
        let h = self.step;
        let (h00, h10, h01, h11) = hermite(s);
        &self.p[k] * h00
            + &self.dp[k] * (h10 * h)
            + &self.p[k + 1] * h01
            + &self.dp[k + 1] * (h11 * h)
    }

    /// `dP/dt` from the Riccati right-hand side at the interpolated `P(t)`.
    pub fn p_dot(&self, t: f64) -> DMatrix<f64> {
        self.coefficients().rhs(&self.p(t)).0
    }

    pub fn r(&self, t: f64) -> f64 {
        let (k, s) = self.locate(t);
        if self.r.len() == 1 {
            return self.r[0];
        }
        let co = self.coefficients();
        let (h00, h10, h01, h11) = hermite(s);
        let dr0 = co.rhs(&self.p[k]).1;
        let dr1 = co.rhs(&self.p[k + 1]).1;
        self.r[k] * h00 + dr0 * h10 * self.step + self.r[k + 1] * h01 + dr1 * h11 * self.step
    }

    pub fn r_dot(&self, t: f64) -> f64 {
        self.coefficients().rhs(&self.p(t)).1
    }

    /// Linear coefficient `q(t)`, identically zero for this family.
    pub fn q(&self, _t: f64) -> DVector<f64> {
        DVector::zeros(self.players * self.dim)
    }

    /// `P(t) (x) I_d`.
    pub fn full_p(&self, t: f64) -> DMatrix<f64> {
        self.p(t).kronecker(&DMatrix::identity(self.dim, self.dim))
    }

    /// Feedback matrix `K(t)`, `a^j = -sum_k K_{jk} x^k`.
    pub fn feedback(&self, t: f64) -> DMatrix<f64> {
        self.coefficients().feedback(&self.p(t))
    }

    /// `u^{N,1}(t, x)` for a flat `N x d` point.
    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        let p = self.p(t);
        let d = self.dim;
        let mut acc = 0.0;
        for j in 0..self.players {
            for k in 0..self.players {
                let dot: f64 = (0..d).map(|c| x[j * d + c] * x[k * d + c]).sum();
                acc += p[(j, k)] * dot;
            }
        }
        0.5 * acc + self.r(t)
    }

    pub fn time_derivative(&self, t: f64, x: &[f64]) -> f64 {
        let dp = self.p_dot(t);
        let d = self.dim;
        let mut acc = 0.0;
        for j in 0..self.players {
            for k in 0..self.players {
                let dot: f64 = (0..d).map(|c| x[j * d + c] * x[k * d + c]).sum();
                acc += dp[(j, k)] * dot;
            }
        }
        0.5 * acc + self.r_dot(t)
    }

    /// `D_j u^{N,1}(t, x)`.
    pub fn gradient(&self, t: f64, x: &[f64], j: usize) -> Vec<f64> {
        let p = self.p(t);
        let d = self.dim;
        (0..d)
            .map(|c| (0..self.players).map(|k| p[(j, k)] * x[k * d + c]).sum())
            .collect()
    }

    /// `D_{jk} u^{N,1} = P_{jk} I_d`.
    pub fn hessian(&self, t: f64, j: usize, k: usize) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) * self.p(t)[(j, k)]
    }

    /// Residual of the Nash equation for `u^{N,1}` at `(t, x)`, evaluated
    /// with the model's own Hamiltonian and fixed-point solver.
    pub fn pde_residual(&self, model: &Model, t: f64, x: &[f64]) -> Result<f64, NashError> {
        let (n, d) = (self.players, self.dim);
        let p = self.p(t);
        let swapped = |j: usize| -> Vec<f64> {
            let mut y = x.to_vec();
            for c in 0..d {
                y.swap(c, j * d + c);
            }
            y
        };
        let mut costates = Vec::with_capacity(n * d);
        for j in 0..n {
            costates.extend(self.gradient(t, &swapped(j), 0));
        }
        let xv = PlayerVector::new(n, d, x.to_vec()).map_err(|e| NashError::FixedPointFailure {
            coords: x.to_vec(),
            source: e,
        })?;
        let pv = PlayerVector::new(n, d, costates).map_err(|e| NashError::FixedPointFailure {
            coords: x.to_vec(),
            source: e,
        })?;
        let a = solve_a_n(model, &xv, &pv, 1e-13)
            .map_err(|e| NashError::FixedPointFailure {
                coords: x.to_vec(),
                source: e,
            })?
            .actions;
        let mu = CloudView::excluding(d, x, a.as_slice(), 0);
        let h = model
            .hamiltonian
            .value(&x[..d], pv.row(0), &mu)
            .map_err(|e| NashError::FixedPointFailure {
                coords: x.to_vec(),
                source: e.into(),
            })?;
        let ones: f64 = p.iter().sum();
        let diffusion = d as f64 * (p.trace() + model.sigma0 * ones);
        let mut transport = 0.0;
        for j in 1..n {
            let g = self.gradient(t, x, j);
            transport += a.row(j).iter().zip(&g).map(|(s, v)| s * v).sum::<f64>();
        }
        Ok(-self.time_derivative(t, x) - diffusion + h - transport)
    }
}

/// Cubic Hermite basis `(h00, h10, h01, h11)` at `s` in `[0, 1]`.
pub(crate) fn hermite(s: f64) -> (f64, f64, f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    )
}
