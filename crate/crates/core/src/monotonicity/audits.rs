//! Audits of the model data.

use nalgebra::DVector;

use super::{AuditKind, MonotonicityError, MonotonicityReport, Sampling};
use crate::fixedpoint::{assemble_blocks, Flavor, PlayerVector};
use crate::model::{CloudView, Model, MonotonicityConstants, StateActionCloud, StateCloud};
use crate::par;

/// Slack below this (after normalization) counts as round-off, not violation.
const ROUNDOFF: f64 = -1e-12;

const PANELS: usize = 8;

/// 8-point Gauss–Legendre nodes and weights on `[0, 1]`.
const GAUSS: [(f64, f64); 8] = {
    const X: [f64; 4] = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const W: [f64; 4] = [
        0.362_683_783_378_362,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    [
        (0.5 * (1.0 - X[3]), 0.5 * W[3]),
        (0.5 * (1.0 - X[2]), 0.5 * W[2]),
        (0.5 * (1.0 - X[1]), 0.5 * W[1]),
        (0.5 * (1.0 - X[0]), 0.5 * W[0]),
        (0.5 * (1.0 + X[0]), 0.5 * W[0]),
        (0.5 * (1.0 + X[1]), 0.5 * W[1]),
        (0.5 * (1.0 + X[2]), 0.5 * W[2]),
        (0.5 * (1.0 + X[3]), 0.5 * W[3]),
    ]
};

/// Smallest eigenvalue of the symmetric part of the block matrix `M` at
/// Gaussian profiles `(x, a)` of `players` players.
pub fn audit_discrete_m(
    model: &Model,
    players: usize,
    sampling: &Sampling,
) -> Result<MonotonicityReport, MonotonicityError> {
    if players < 2 {
        return Err(MonotonicityError::InvalidInput(format!(
            "{players} players; at least 2 needed"
        )));
    }
    sampling.check(0)?;
    let d = model.dim;
    let values = par::map_range(sampling.samples, |k| {
        let mut rng = sampling.rng(k);
        let x =
            PlayerVector::new(players, d, sampling.gaussian(&mut rng, players * d)).expect("sized");
        let a =
            PlayerVector::new(players, d, sampling.gaussian(&mut rng, players * d)).expect("sized");
        assemble_blocks(model, &x, &a, Flavor::M).min_sym_eigenvalue()
    });
    Ok(MonotonicityReport::from_values(
        AuditKind::DiscreteM,
        values,
        0.0,
        true,
    ))
}

/// Two independent state-action clouds `(X, α)` and `(X', α')`.
struct Quadruple {
    z: StateActionCloud,
    z_prime: StateActionCloud,
}

impl Quadruple {
    fn draw(model: &Model, sampling: &Sampling, sample: usize) -> Self {
        let len = sampling.cloud_size * model.dim;
        let mut rng = sampling.rng(sample);
        let mut cloud = || {
            let x = sampling.gaussian(&mut rng, len);
            let a = sampling.gaussian(&mut rng, len);
            StateActionCloud::new(model.dim, x, a).expect("finite samples")
        };
        let z = cloud();
        let z_prime = cloud();
        Self { z, z_prime }
    }

    /// `E|Δα|²` and `E|ΔX|²`.
    fn squared_gaps(&self) -> (f64, f64) {
        let n = self.z.len() as f64;
        let gap =
            |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        (
            gap(self.z.actions(), self.z_prime.actions()),
            gap(self.z.states(), self.z_prime.states()),
        )
    }

    /// Cloud at `Z' + s (Z - Z')`.
    fn along(&self, s: f64) -> StateActionCloud {
        let mix = |u: &[f64], v: &[f64]| {
            u.iter()
                .zip(v)
                .map(|(a, b)| b + s * (a - b))
                .collect::<Vec<f64>>()
        };
        StateActionCloud::new(
            self.z.dim(),
            mix(self.z.states(), self.z_prime.states()),
            mix(self.z.actions(), self.z_prime.actions()),
        )
        .expect("finite samples")
    }
}

fn diff(u: &[f64], v: &[f64]) -> DVector<f64> {
    DVector::from_iterator(u.len(), u.iter().zip(v).map(|(a, b)| a - b))
}

/// `E[(D_aL(Z) - D_aL(Z'))·Δα + (D_xL(Z) - D_xL(Z'))·ΔX]`.
fn first_order_l(model: &Model, q: &Quadruple) -> f64 {
    let l = &model.lagrangian;
    let (mu, mu_p) = (q.z.view(), q.z_prime.view());
    let n = q.z.len();
    let mut total = 0.0;
    for k in 0..n {
        let (x, a) = (q.z.state(k), q.z.action(k));
        let (xp, ap) = (q.z_prime.state(k), q.z_prime.action(k));
        let da = l.d_a(x, a, &mu) - l.d_a(xp, ap, &mu_p);
        let dx = l.d_x(x, a, &mu) - l.d_x(xp, ap, &mu_p);
        total += da.dot(&diff(a, ap)) + dx.dot(&diff(x, xp));
    }
    total / n as f64
}

/// The second-order form along the segment from `Z'` to `Z` in the
/// direction `(Y, β) = (ΔX, Δα)`, including the measure cross terms.
fn second_order_l(model: &Model, q: &Quadruple, s: f64) -> f64 {
    let l = &model.lagrangian;
    let zs = q.along(s);
    let mu = zs.view();
    let n = zs.len();
    let ys: Vec<DVector<f64>> = (0..n)
        .map(|k| diff(q.z.state(k), q.z_prime.state(k)))
        .collect();
    let bs: Vec<DVector<f64>> = (0..n)
        .map(|k| diff(q.z.action(k), q.z_prime.action(k)))
        .collect();
    let mut total = 0.0;
    for k in 0..n {
        let (x, a) = (zs.state(k), zs.action(k));
        let (y, b) = (&ys[k], &bs[k]);
        let mut local = y.dot(&(l.d_xx(x, a, &mu) * y))
            + 2.0 * b.dot(&(l.d_xa(x, a, &mu) * y))
            + b.dot(&(l.d_aa(x, a, &mu) * b));
        let mut cross = 0.0;
        for j in 0..n {
            let (xj, aj) = (zs.state(j), zs.action(j));
            let (yj, bj) = (&ys[j], &bs[j]);
            cross +=
                b.dot(&(l.dmu_a_d_a(x, a, &mu, xj, aj) * bj + l.dmu_x_d_a(x, a, &mu, xj, aj) * yj));
            cross +=
                y.dot(&(l.dmu_a_d_x(x, a, &mu, xj, aj) * bj + l.dmu_x_d_x(x, a, &mu, xj, aj) * yj));
        }
        local += cross / n as f64;
        total += local;
    }
    total / n as f64
}

/// Composite rule: 8-point Gauss–Legendre on each of `PANELS` subintervals.
fn integrated_second_order_l(model: &Model, q: &Quadruple) -> f64 {
    let h = 1.0 / PANELS as f64;
    (0..PANELS)
        .flat_map(|p| GAUSS.iter().map(move |&(s, w)| (h * (p as f64 + s), h * w)))
        .map(|(s, w)| w * second_order_l(model, q, s))
        .sum()
}

/// Displacement semi-monotonicity of `L`.
///
/// With declared constants, each sample reports the slack
/// `LHS − C_{L,a} E|Δα|² + C_{L,x} E|ΔX|²` divided by `E|Δα|² + E|ΔX|²`;
/// the threshold allows round-off only. Without declared constants this is
/// [`fit_disp_l`].
pub fn audit_disp_l(
    model: &Model,
    sampling: &Sampling,
) -> Result<MonotonicityReport, MonotonicityError> {
    match model.constants {
        Some(c) => {
            sampling.check(2)?;
            let values = par::map_range(sampling.samples, |k| {
                let q = Quadruple::draw(model, sampling, k);
                let (a2, x2) = q.squared_gaps();
                (first_order_l(model, &q) - c.c_la * a2 + c.c_lx * x2) / (a2 + x2)
            });
            let mut report =
                MonotonicityReport::from_values(AuditKind::DispL, values, ROUNDOFF, false);
            report.constants = Some(c);
            Ok(report)
        }
        None => fit_disp_l(model, sampling),
    }
}

/// Least-violation fit of `C_{L,a}` with `C_{L,x} = 0`: per sample the
/// ratio `LHS / E|Δα|²`, whose minimum is the largest admissible
/// `C_{L,a}`. Passes when that constant is positive.
pub fn fit_disp_l(
    model: &Model,
    sampling: &Sampling,
) -> Result<MonotonicityReport, MonotonicityError> {
    sampling.check(2)?;
    let values = par::map_range(sampling.samples, |k| {
        let q = Quadruple::draw(model, sampling, k);
        let (a2, _) = q.squared_gaps();
        first_order_l(model, &q) / a2
    });
    let mut report = MonotonicityReport::from_values(AuditKind::DispL, values, 0.0, true);
    report.fitted = true;
    report.constants = Some(MonotonicityConstants {
        c_la: report.worst_value,
        c_lx: 0.0,
        c_g: 0.0,
    });
    Ok(report)
}

/// Agreement between the first-order displacement form of `L` and the
/// integral of its second-order form along the segment.
#[derive(Clone, Debug, PartialEq)]
pub struct RemarkCheck {
    pub first_order: Vec<f64>,
    pub second_order: Vec<f64>,
    /// Samples where the first-order slack exceeds `1e-8` in magnitude.
    pub compared: usize,
    pub agreed: usize,
    pub max_gap: f64,
}

impl RemarkCheck {
    pub fn pass(&self) -> bool {
        self.agreed == self.compared
    }
}

/// Evaluates both displacement forms of `L` on the same samples, as slacks
/// against the declared constants (zero constants if none are declared).
/// The second-order form is integrated with 8-point Gauss–Legendre.
pub fn remark_equivalence(
    model: &Model,
    sampling: &Sampling,
) -> Result<RemarkCheck, MonotonicityError> {
    sampling.check(2)?;
    let c = model.constants.unwrap_or(MonotonicityConstants {
        c_la: 0.0,
        c_lx: 0.0,
        c_g: 0.0,
    });
    let pairs = par::map_range(sampling.samples, |k| {
        let q = Quadruple::draw(model, sampling, k);
        let (a2, x2) = q.squared_gaps();
        let offset = -c.c_la * a2 + c.c_lx * x2;
        (
            first_order_l(model, &q) + offset,
            integrated_second_order_l(model, &q) + offset,
        )
    });
    let (first_order, second_order): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let mut compared = 0;
    let mut agreed = 0;
    let mut max_gap: f64 = 0.0;
    for (a, b) in first_order.iter().zip(&second_order) {
        max_gap = max_gap.max((a - b).abs());
        if a.abs() > 1e-8 {
            compared += 1;
            if a.signum() == b.signum() {
                agreed += 1;
            }
        }
    }
    Ok(RemarkCheck {
        first_order,
        second_order,
        compared,
        agreed,
        max_gap,
    })
}

fn state_pair(model: &Model, sampling: &Sampling, sample: usize) -> (StateCloud, StateCloud) {
    let len = sampling.cloud_size * model.dim;
    let mut rng = sampling.rng(sample);
    let m = StateCloud::new(model.dim, sampling.gaussian(&mut rng, len)).expect("finite samples");
    let m_prime =
        StateCloud::new(model.dim, sampling.gaussian(&mut rng, len)).expect("finite samples");
    (m, m_prime)
}

/// `(E[(D_xG(X, m) − D_xG(X', m'))·ΔX], E|ΔX|²)`.
fn first_order_g(model: &Model, m: &StateCloud, m_prime: &StateCloud) -> (f64, f64) {
    let g = &model.terminal;
    let (v, vp) = (m.view(), m_prime.view());
    let n = m.len() as f64;
    let mut lhs = 0.0;
    let mut x2 = 0.0;
    for k in 0..m.len() {
        let (x, xp) = (m.point(k), m_prime.point(k));
        let dx = diff(x, xp);
        lhs += (g.d_x(x, &v) - g.d_x(xp, &vp)).dot(&dx);
        x2 += dx.norm_squared();
    }
    (lhs / n, x2 / n)
}

/// Displacement semi-monotonicity of `G`: with a declared `C_G`, the slack
/// `(LHS + C_G E|ΔX|²) / E|ΔX|²` per sample. Without one this is
/// [`fit_disp_g`].
pub fn audit_disp_g(
    model: &Model,
    sampling: &Sampling,
) -> Result<MonotonicityReport, MonotonicityError> {
    match model.constants {
        Some(c) => {
            sampling.check(2)?;
            let values = par::map_range(sampling.samples, |k| {
                let (m, mp) = state_pair(model, sampling, k);
                let (lhs, x2) = first_order_g(model, &m, &mp);
                (lhs + c.c_g * x2) / x2
            });
            let mut report =
                MonotonicityReport::from_values(AuditKind::DispG, values, ROUNDOFF, false);
            report.constants = Some(c);
            Ok(report)
        }
        None => fit_disp_g(model, sampling),
    }
}

/// Reports the raw ratio `LHS / E|ΔX|²` per sample and the fitted
/// `C_G = max(0, −min ratio)`; the threshold is `−C_G`.
pub fn fit_disp_g(
    model: &Model,
    sampling: &Sampling,
) -> Result<MonotonicityReport, MonotonicityError> {
    sampling.check(2)?;
    let values = par::map_range(sampling.samples, |k| {
        let (m, mp) = state_pair(model, sampling, k);
        let (lhs, x2) = first_order_g(model, &m, &mp);
        lhs / x2
    });
    let report = MonotonicityReport::from_values(AuditKind::DispG, values, 0.0, false);
    let worst = report.worst_value;
    let c_g = (-worst).max(0.0);
    let mut report = report.with_worst(worst, -c_g);
    report.fitted = true;
    report.constants = Some(MonotonicityConstants {
        c_la: 0.0,
        c_lx: 0.0,
        c_g,
    });
    Ok(report)
}

/// Fitted `C_{L,a}` (with `C_{L,x} = 0`) and `C_G` from the two audits.
pub fn fit_constants(
    model: &Model,
    sampling: &Sampling,
) -> Result<MonotonicityConstants, MonotonicityError> {
    let l = fit_disp_l(model, sampling)?;
    let g = fit_disp_g(model, sampling)?;
    Ok(MonotonicityConstants {
        c_la: l.worst_value,
        c_lx: 0.0,
        c_g: g.constants.map_or(0.0, |c| c.c_g),
    })
}

/// `C_disp = C_{L,a} − T C_G − T²/2 C_{L,x}` from declared constants, or
/// from `fitted` when none are declared. Passes when positive.
pub fn compute_c_disp(
    model: &Model,
    fitted: Option<MonotonicityConstants>,
) -> Result<MonotonicityReport, MonotonicityError> {
    let (c, is_fitted) = match (model.constants, fitted) {
        (Some(c), _) => (c, false),
        (None, Some(c)) => (c, true),
        (None, None) => return Err(MonotonicityError::MissingConstants(model.name.clone())),
    };
    let t = model.horizon;
    let value = c.c_la - t * c.c_g - 0.5 * t * t * c.c_lx;
    let mut report = MonotonicityReport::from_values(AuditKind::CDisp, vec![value], 0.0, true);
    report.constants = Some(c);
    report.fitted = is_fitted;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LlTarget {
    Lagrangian,
    Terminal,
}

fn ll_lagrangian(model: &Model, mu: &CloudView, mu_p: &CloudView) -> f64 {
    let l = &model.lagrangian;
    let n = mu.len() as f64;
    let plus: f64 = mu
        .iter()
        .map(|(x, a)| l.value(x, a, mu) - l.value(x, a, mu_p))
        .sum();
    let minus: f64 = mu_p
        .iter()
        .map(|(x, a)| l.value(x, a, mu) - l.value(x, a, mu_p))
        .sum();
    (plus - minus) / n
}

fn ll_terminal(model: &Model, m: &StateCloud, m_prime: &StateCloud) -> f64 {
    let g = &model.terminal;
    let (v, vp) = (m.view(), m_prime.view());
    let n = m.len() as f64;
    let plus: f64 = v.iter().map(|x| g.value(x, &v) - g.value(x, &vp)).sum();
    let minus: f64 = vp.iter().map(|x| g.value(x, &v) - g.value(x, &vp)).sum();
    (plus - minus) / n
}

/// Lasry–Lions monotonicity of `L` or `G`: the double integral
/// `∫[F(·, μ) − F(·, μ')] d(μ − μ')` as a finite sum over random cloud pairs.
pub fn audit_ll(
    model: &Model,
    target: LlTarget,
    sampling: &Sampling,
) -> Result<MonotonicityReport, MonotonicityError> {
    sampling.check(2)?;
    let (kind, values) = match target {
        LlTarget::Lagrangian => (
            AuditKind::LlL,
            par::map_range(sampling.samples, |k| {
                let q = Quadruple::draw(model, sampling, k);
                ll_lagrangian(model, &q.z.view(), &q.z_prime.view())
            }),
        ),
        LlTarget::Terminal => (
            AuditKind::LlG,
            par::map_range(sampling.samples, |k| {
                let (m, mp) = state_pair(model, sampling, k);
                ll_terminal(model, &m, &mp)
            }),
        ),
    };
    Ok(MonotonicityReport::from_values(
        kind, values, ROUNDOFF, false,
    ))
}
