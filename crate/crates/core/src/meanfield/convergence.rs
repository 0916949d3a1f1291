//! Distance between N-player lifts and a master field on common probes.

use statrs::distribution::{ContinuousCDF, Normal};

use super::{MasterLift, MeanFieldError};
use crate::model::StateCloud;

/// Deterministic cloud of `size` atoms at standard normal quantiles
/// `scale * Φ^{-1}((j + 1/2) / size)`, repeated along every coordinate.
pub fn quantile_cloud(size: usize, dim: usize, scale: f64) -> StateCloud {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut points = Vec::with_capacity(size * dim);
    for j in 0..size {
        let q = scale * normal.inverse_cdf((j as f64 + 0.5) / size as f64);
        points.extend(std::iter::repeat(q).take(dim));
    }
    StateCloud::new(dim, points).expect("finite quantiles")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub players: usize,
    /// `max |U^N(t, x, m) - U(t, x, m)|` over the probes.
    pub error: f64,
    pub probes: usize,
}

/// Common probe set: times, reference points and the cloud scale.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceProbes {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub scale: f64,
}

/// For each lift, evaluates both fields at the probe times (moved to the
/// lift's nearest time node), reference points and a quantile cloud of the
/// lift's size, all snapped to the lift's grid.
pub fn convergence_report(
    lifts: &[&dyn MasterLift],
    master: &dyn MasterLift,
    probes: &ConvergenceProbes,
) -> Result<Vec<ConvergenceRow>, MeanFieldError> {
    let mut rows = Vec::with_capacity(lifts.len());
    for lift in lifts {
        let size = lift.cloud_size().ok_or_else(|| {
            MeanFieldError::InvalidInput("convergence needs lifts of a fixed cloud size".into())
        })?;
        let d = lift.model().dim;
        let raw = quantile_cloud(size, d, probes.scale);
        let snapped: Vec<f64> = (0..size).flat_map(|j| lift.snap(raw.point(j))).collect();
        let cloud = StateCloud::new(d, snapped)?;
        let nodes = lift.time_nodes();
        let mut error: f64 = 0.0;
        let mut count = 0;
        for &t in &probes.times {
            let t = match &nodes {
                Some(ts) => ts
                    .iter()
                    .copied()
                    .min_by(|a, b| (a - t).abs().total_cmp(&(b - t).abs()))
                    .unwrap_or(t),
                None => t,
            };
            for x in &probes.points {
                let x = lift.snap(x);
                let u_n = lift.value(t, &x, &cloud.view())?;
                let u = master.value(t, &x, &cloud.view())?;
                error = error.max((u_n - u).abs());
                count += 1;
            }
        }
        rows.push(ConvergenceRow {
            players: size + 1,
            error,
            probes: count,
        });
    }
    Ok(rows)
}
