//! Residual of the master equation along a lift.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{MasterLift, MeanFieldError};
use crate::fixedpoint::solve_phi;
use crate::model::{StateActionCloud, StateCloud, StateView};
use crate::par;

/// Fraction of the grid radius that probes may reach.
pub const PROBE_FRACTION: f64 = 0.75;

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualProbe {
    pub t: f64,
    pub x: Vec<f64>,
    pub cloud: StateCloud,
}

/// How probes are drawn: Gaussian positions with standard deviation `scale`,
/// times uniform on `[0, T)`, one ChaCha8 stream per probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeSpec {
    pub count: usize,
    pub scale: f64,
    pub seed: u64,
    /// Cloud size for lifts that accept any size.
    pub cloud_size: usize,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            count: 50,
            scale: 0.7,
            seed: 0,
            cloud_size: 8,
        }
    }
}

/// Draws probes for `lift`. The same seed yields the same raw draws for
/// every lift (cloud atoms are drawn in order, so smaller clouds are
/// prefixes of larger ones) before times are moved onto the lift's time
/// mesh and points onto its spatial grid.
pub fn residual_probes(lift: &dyn MasterLift, spec: &ProbeSpec) -> Vec<ResidualProbe> {
    let model = lift.model();
    let d = model.dim;
    let size = lift.cloud_size().unwrap_or(spec.cloud_size);
    let nodes = lift.time_nodes();
    let limit = lift.domain_radius().map(|r| PROBE_FRACTION * r);
    (0..spec.count)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(k as u64);
            let raw_t = rng.gen_range(0.0..1.0) * model.horizon;
            let t = match &nodes {
                Some(ts) => {
                    // Skip the first slice, whose time difference is one-sided.
                    let j = (1..ts.len())
                        .min_by(|&a, &b| (ts[a] - raw_t).abs().total_cmp(&(ts[b] - raw_t).abs()))
                        .unwrap_or(0);
                    ts[j]
                }
                None => raw_t,
            };
            let point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                let p: Vec<f64> = (0..d)
                    .map(|_| {
                        let v = spec.scale * rng.sample::<f64, _>(StandardNormal);
                        match limit {
                            Some(l) => v.clamp(-l, l),
                            None => v,
                        }
                    })
                    .collect();
                lift.snap(&p)
            };
            let x = point(&mut rng);
            let mut atoms = Vec::with_capacity(size * d);
            for _ in 0..size {
                atoms.extend(point(&mut rng));
            }
            ResidualProbe {
                t,
                x,
                cloud: StateCloud::new(d, atoms).expect("finite atoms"),
            }
        })
        .collect()
}

/// Signed contributions to the residual.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ResidualTerms {
    /// `-U_t`.
    pub time: f64,
    /// `-(tr U_xx + ∫ tr U_ym dm)`.
    pub idiosyncratic: f64,
    /// `-σ0 (tr U_xx + ∫ tr U_ym dm + ∫∫ tr U_mm dm dm + 2 ∫ tr U_xm dm)`.
    pub common: f64,
    /// `H(x, U_x, Φ(ν))`.
    pub hamiltonian: f64,
    /// `∫ D_p H(y, U_x(y), Φ(ν)) · U_m(y) dm(y)`.
    pub transport: f64,
}

impl ResidualTerms {
    pub fn total(&self) -> f64 {
        self.time + self.idiosyncratic + self.common + self.hamiltonian + self.transport
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualRow {
    pub probe: usize,
    pub t: f64,
    pub residual: f64,
    pub terms: ResidualTerms,
    /// `(|x| + M_2(m)^{1/2}) / sqrt(N)` with `N = |m| + 1`.
    pub envelope: f64,
}

impl ResidualRow {
    pub fn ratio(&self) -> f64 {
        self.residual / self.envelope
    }
}

/// Evaluates the master equation along `lift` at each probe:
///
/// `-U_t - (1+σ0)(tr U_xx + ∫tr U_ym) - σ0 ∫∫tr U_mm - 2σ0 ∫tr U_xm
///  + H(x, U_x, Φ(ν)) + ∫ D_pH(y, U_x(y), Φ(ν))·U_m(y) dm(y)`
///
/// where `ν` is the cloud of pairs `(y_j, U_x(t, y_j, m))` and `Φ` the
/// measure-level fixed point. The double integral averages over distinct
/// atoms, on which `U_mm` is defined.
pub fn master_residual(
    lift: &dyn MasterLift,
    probes: &[ResidualProbe],
) -> Result<Vec<ResidualRow>, MeanFieldError> {
    par::try_map_range(probes.len(), |k| residual_at(lift, k, &probes[k]))
}

fn residual_at(
    lift: &dyn MasterLift,
    id: usize,
    probe: &ResidualProbe,
) -> Result<ResidualRow, MeanFieldError> {
    let model = lift.model();
    let d = model.dim;
    let (t, x) = (probe.t, probe.x.as_slice());
    let m = probe.cloud.view();
    let n1 = m.len();
    let w = 1.0 / n1 as f64;
    let ux = lift.d_x(t, x, &m)?;

    let mut costates = Vec::with_capacity(n1 * d);
    for y in m.iter() {
        costates.extend(lift.d_x(t, y, &m)?.iter());
    }
    let nu = StateActionCloud::new(d, m.to_owned_cloud().points().to_vec(), costates)?;
    let mu = solve_phi(model, &nu, 1e-12)?;
    let mu_view = mu.view();
    let hamiltonian = model.hamiltonian.value(x, ux.as_slice(), &mu_view)?;
    let mut transport = 0.0;
    for j in 0..n1 {
        let dp = model.hamiltonian.d_p(m.point(j), nu.action(j), &mu_view)?;
        transport += w * dp.dot(&lift.d_m(t, x, &m, j)?);
    }

    let mut local = lift.d_xx(t, x, &m)?.trace();
    for j in 0..n1 {
        local += w * lift.d_ym(t, x, &m, j)?.trace();
    }
    let sigma0 = model.sigma0;
    let common = if sigma0 == 0.0 {
        0.0
    } else {
        let mut extra = 0.0;
        for j in 0..n1 {
            extra += 2.0 * w * lift.d_xm(t, x, &m, j)?.trace();
        }
        if n1 >= 2 {
            let pairs = (n1 * (n1 - 1)) as f64;
            for j in 0..n1 {
                for k in (0..n1).filter(|&k| k != j) {
                    extra += lift.d_mm(t, x, &m, j, k)?.trace() / pairs;
                }
            }
        }
        -sigma0 * (local + extra)
    };
    let terms = ResidualTerms {
        time: -lift.d_t(t, x, &m)?,
        idiosyncratic: -local,
        common,
        hamiltonian,
        transport,
    };
    Ok(ResidualRow {
        probe: id,
        t,
        residual: terms.total().abs(),
        terms,
        envelope: envelope(x, &m),
    })
}

fn envelope(x: &[f64], m: &StateView) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let m2 = m
        .iter()
        .map(|y| y.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / m.len() as f64;
    (norm + m2.sqrt()) / ((m.len() + 1) as f64).sqrt()
}
