//! Lasry–Lions monotonicity of a computed master lift along time.

use super::{AuditKind, MonotonicityError, MonotonicityReport, Sampling};
use crate::meanfield::{MasterLift, PROBE_FRACTION};
use crate::model::StateCloud;
use crate::par;

#[derive(Clone, Debug, PartialEq)]
pub struct PropagationOptions {
    pub sampling: Sampling,
    /// Times to audit; the lift's own time nodes (or 11 uniform times for
    /// smooth lifts) when `None`. Times are moved to the nearest node.
    pub times: Option<Vec<f64>>,
    /// Allowed negative slack, typically a multiple of the discretization error.
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SliceAudit {
    pub t: f64,
    /// Smallest `∫[U(t,·,m) − U(t,·,m')] d(m − m')` over the sampled pairs.
    pub worst: f64,
    /// Largest spectral norm of `D_xx U` at the sampled points.
    pub max_uxx: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagationReport {
    /// Values are per-slice minima in slice order.
    pub report: MonotonicityReport,
    pub slices: Vec<SliceAudit>,
    /// Largest `|D_xx U|` across slices.
    pub uxx_bound: f64,
}

fn audit_times(lift: &dyn MasterLift, requested: Option<&[f64]>) -> Vec<f64> {
    let nodes = lift.time_nodes();
    let horizon = lift.model().horizon;
    let raw: Vec<f64> = match (requested, &nodes) {
        (Some(ts), _) => ts.to_vec(),
        (None, Some(ns)) => return ns.clone(),
        (None, None) => (0..=10).map(|k| horizon * k as f64 / 10.0).collect(),
    };
    let mut times: Vec<f64> = match &nodes {
        Some(ns) => raw
            .iter()
            .map(|&t| {
                ns.iter()
                    .copied()
                    .min_by(|a, b| (a - t).abs().total_cmp(&(b - t).abs()))
                    .unwrap_or(t)
            })
            .collect(),
        None => raw,
    };
    times.dedup();
    times
}

/// Audits `∫[U(t, x, m) − U(t, x, m')] d(m − m')(x)` at each audit time on
/// the same cloud pairs, and the size of `D_xx U` at the atoms of `m`.
///
/// Clouds have the lift's size (or `sampling.cloud_size`), Gaussian atoms
/// clamped to a fraction of the domain and snapped to the lift's grid.
pub fn audit_ll_propagation(
    lift: &dyn MasterLift,
    options: &PropagationOptions,
) -> Result<PropagationReport, MonotonicityError> {
    let sampling = &options.sampling;
    let size = lift.cloud_size().unwrap_or(sampling.cloud_size);
    sampling.check(0)?;
    if size == 0 {
        return Err(MonotonicityError::InvalidInput(
            "clouds need at least one atom".into(),
        ));
    }
    if !(options.tolerance.is_finite() && options.tolerance >= 0.0) {
        return Err(MonotonicityError::InvalidInput(format!(
            "tolerance {} must be >= 0",
            options.tolerance
        )));
    }
    let d = lift.model().dim;
    let limit = lift.domain_radius().map(|r| PROBE_FRACTION * r);
    let cloud = |raw: Vec<f64>| -> StateCloud {
        let mut points = Vec::with_capacity(raw.len());
        for p in raw.chunks(d) {
            let clamped: Vec<f64> = p
                .iter()
                .map(|&v| match limit {
                    Some(l) => v.clamp(-l, l),
                    None => v,
                })
                .collect();
            points.extend(lift.snap(&clamped));
        }
        StateCloud::new(d, points).expect("finite samples")
    };
    let pairs: Vec<(StateCloud, StateCloud)> = (0..sampling.samples)
        .map(|k| {
            let mut rng = sampling.rng(k);
            let m = cloud(sampling.gaussian(&mut rng, size * d));
            let mp = cloud(sampling.gaussian(&mut rng, size * d));
            (m, mp)
        })
        .collect();

    let times = audit_times(lift, options.times.as_deref());
    let mut slices = Vec::with_capacity(times.len());
    for &t in &times {
        let per_sample =
            par::try_map_range(pairs.len(), |k| -> Result<(f64, f64), MonotonicityError> {
                let (m, mp) = &pairs[k];
                let (v, vp) = (m.view(), mp.view());
                let n = m.len() as f64;
                let mut plus = 0.0;
                let mut uxx: f64 = 0.0;
                for x in v.iter() {
                    plus += lift.value(t, x, &v)? - lift.value(t, x, &vp)?;
                    uxx = uxx.max(lift.d_xx(t, x, &v)?.norm());
                }
                let mut minus = 0.0;
                for x in vp.iter() {
                    minus += lift.value(t, x, &v)? - lift.value(t, x, &vp)?;
                }
                Ok(((plus - minus) / n, uxx))
            })?;
        slices.push(SliceAudit {
            t,
            worst: per_sample.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
            max_uxx: per_sample.iter().map(|p| p.1).fold(0.0, f64::max),
        });
    }
    let values = slices.iter().map(|s| s.worst).collect();
    let report = MonotonicityReport::from_values(
        AuditKind::LlPropagation,
        values,
        -options.tolerance,
        false,
    );
    let uxx_bound = slices.iter().map(|s| s.max_uxx).fold(0.0, f64::max);
    Ok(PropagationReport {
        report,
        slices,
        uxx_bound,
    })
}
