//! Damped Picard iteration for the one-dimensional mean field game of
//! controls without common noise.
//!
//! Each iteration takes a flow `μ_t` of state-action clouds, solves the
//! backward HJB equation `-u_t - u_xx + H(x, u_x, μ_t) = 0`, `u(T) = G(·, m_T)`,
//! transports the initial density forward with drift `-D_p H(x, u_x, μ_t)`,
//! rebuilds `μ_t = Φ((Id, u_x(t, ·))_# m_t)` on inverse-CDF particles and
//! averages it with the previous flow.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::MeanFieldError;
use crate::fixedpoint::solve_phi;
use crate::model::{wasserstein, Model, StateActionCloud, StateView, WassersteinOrder};
use crate::par;

/// Spatial mesh `[-R, R]` with `points` nodes; `dt` defaults to the explicit
/// stability bound `h² / 2.2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PicardGrid {
    pub radius: f64,
    pub points: usize,
    pub dt: Option<f64>,
}

/// Gaussian initial density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialDensity {
    pub mean: f64,
    pub std: f64,
}

/// Starting flow: the initial quantile particles shifted by `shift`, spread
/// by `spread` around their mean and given the constant action `action`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialGuess {
    pub shift: f64,
    pub spread: f64,
    pub action: f64,
}

impl Default for InitialGuess {
    fn default() -> Self {
        Self {
            shift: 0.0,
            spread: 1.0,
            action: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PicardOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Particles per time node.
    pub particles: usize,
    /// Number of time intervals on which the flow is stored.
    pub time_intervals: usize,
    pub initial: InitialGuess,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-4,
            max_iter: 200,
            particles: 64,
            time_intervals: 50,
            initial: InitialGuess::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MfgcSolution {
    pub xs: Vec<f64>,
    /// Fine time step of the HJB and Fokker–Planck solves.
    pub dt: f64,
    /// Times of the stored flow.
    pub times: Vec<f64>,
    pub value: Vec<Vec<f64>>,
    /// Nodal densities with `sum_i m_i h = 1`.
    pub density: Vec<Vec<f64>>,
    pub action_flow: Vec<StateActionCloud>,
    pub iterations: usize,
    /// Time-sup `W_1` between successive flows, per iteration.
    pub history: Vec<f64>,
}

impl MfgcSolution {
    fn spacing(&self) -> f64 {
        self.xs[1] - self.xs[0]
    }

    /// Trapezoid-rule mass of the density at time node `k`.
    pub fn mass(&self, k: usize) -> f64 {
        let m = &self.density[k];
        let h = self.spacing();
        h * (m.iter().sum::<f64>() - 0.5 * (m[0] + m[m.len() - 1]))
    }

    pub fn mean(&self, k: usize) -> f64 {
        let h = self.spacing();
        self.xs
            .iter()
            .zip(&self.density[k])
            .map(|(x, m)| x * m * h)
            .sum()
    }

    pub fn variance(&self, k: usize) -> f64 {
        let h = self.spacing();
        let mean = self.mean(k);
        self.xs
            .iter()
            .zip(&self.density[k])
            .map(|(x, m)| (x - mean).powi(2) * m * h)
            .sum()
    }

    /// Writes value and density slices in the grid snapshot layout
    /// (`<base>.bin`, `<base>-density.bin`) with a JSON sidecar.
    pub fn write_snapshot(&self, base: &Path) -> std::io::Result<()> {
        let radius = -self.xs[0];
        let coarse_dt = self.times[1] - self.times[0];
        let header = |out: &mut Vec<u8>| {
            out.extend_from_slice(&1u64.to_le_bytes());
            out.extend_from_slice(&1u64.to_le_bytes());
            out.extend_from_slice(&(self.xs.len() as u64).to_le_bytes());
            out.extend_from_slice(&radius.to_le_bytes());
            out.extend_from_slice(&coarse_dt.to_le_bytes());
            out.extend_from_slice(&((self.times.len() - 1) as u64).to_le_bytes());
        };
        for (suffix, slices) in [("", &self.value), ("-density", &self.density)] {
            let mut bytes = Vec::new();
            header(&mut bytes);
            for v in slices.iter().flatten() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            let name = format!(
                "{}{suffix}.bin",
                base.file_name().and_then(|s| s.to_str()).unwrap_or("mfgc")
            );
            fs::write(base.with_file_name(name), bytes)?;
        }
        #[derive(Serialize)]
        struct Sidecar<'a> {
            radius: f64,
            points: usize,
            dt: f64,
            times: &'a [f64],
            iterations: usize,
            history: &'a [f64],
        }
        let text = serde_json::to_string_pretty(&Sidecar {
            radius,
            points: self.xs.len(),
            dt: self.dt,
            times: &self.times,
            iterations: self.iterations,
            history: &self.history,
        })
        .map_err(std::io::Error::other)?;
        let mut f = fs::File::create(base.with_extension("json"))?;
        writeln!(f, "{text}")
    }
}

struct Setup<'a> {
    model: &'a Model,
    xs: Vec<f64>,
    h: f64,
    dt: f64,
    steps: usize,
    per_interval: usize,
    particles: usize,
    m0: Vec<f64>,
}

struct Sweep {
    /// `u` on every fine step.
    u: Vec<Vec<f64>>,
    /// Density at the stored time nodes.
    density: Vec<Vec<f64>>,
}

fn gaussian_density(xs: &[f64], h: f64, m0: &InitialDensity) -> Vec<f64> {
    let raw: Vec<f64> = xs
        .iter()
        .map(|x| (-0.5 * ((x - m0.mean) / m0.std).powi(2)).exp())
        .collect();
    let total: f64 = raw.iter().sum::<f64>() * h;
    raw.into_iter().map(|v| v / total).collect()
}

/// Equal-weight particles at the `(k + 1/2) / K` quantiles of a nodal
/// density, each node carrying a uniform cell of width `h`.
fn quantile_particles(xs: &[f64], h: f64, m: &[f64], k: usize) -> Vec<f64> {
    let total: f64 = m.iter().sum::<f64>() * h;
    let mut out = Vec::with_capacity(k);
    let mut cum = 0.0;
    let mut cell = 0;
    for j in 0..k {
        let target = (j as f64 + 0.5) / k as f64 * total;
        while cell + 1 < m.len() && cum + m[cell] * h < target {
            cum += m[cell] * h;
            cell += 1;
        }
        let mass = m[cell] * h;
        let frac = if mass > 0.0 {
            ((target - cum) / mass).clamp(0.0, 1.0)
        } else {
            0.5
        };
        out.push(xs[cell] - 0.5 * h + frac * h);
    }
    out
}

fn linear_interp(xs: &[f64], v: &[f64], x: f64) -> f64 {
    let h = xs[1] - xs[0];
    let s = ((x - xs[0]) / h).clamp(0.0, (xs.len() - 1) as f64);
    let i = (s.floor() as usize).min(xs.len() - 2);
    let f = s - i as f64;
    v[i] * (1.0 - f) + v[i + 1] * f
}

fn gradient(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h)
            } else {
                (u[i + 1] - u[i - 1]) / (2.0 * h)
            }
        })
        .collect()
}

impl Setup<'_> {
    /// Flow at fine step `s`, linear in time between stored nodes.
    fn flow_at(&self, flow: &[StateActionCloud], s: usize) -> StateActionCloud {
        let c = (s / self.per_interval).min(flow.len() - 2);
        let f = (s - c * self.per_interval) as f64 / self.per_interval as f64;
        let (a, b) = (&flow[c], &flow[c + 1]);
        let mix = |p: &[f64], q: &[f64]| -> Vec<f64> {
            p.iter()
                .zip(q)
                .map(|(x, y)| (1.0 - f) * x + f * y)
                .collect()
        };
        StateActionCloud::new(
            1,
            mix(a.states(), b.states()),
            mix(a.actions(), b.actions()),
        )
        .expect("finite flow")
    }

    fn sweep(&self, flow: &[StateActionCloud]) -> Result<Sweep, MeanFieldError> {
        let n = self.xs.len();
        let (h, dt) = (self.h, self.dt);
        let model = self.model;
        let terminal = &flow[flow.len() - 1];
        let m_t = StateView::new(1, terminal.states());
        let mut u = vec![vec![0.0; n]; self.steps + 1];
        u[self.steps] = self
            .xs
            .iter()
            .map(|&x| model.terminal.value(&[x], &m_t))
            .collect();
        for s in (1..=self.steps).rev() {
            let mu = self.flow_at(flow, s);
            let view = mu.view();
            let cur = &u[s];
            let mut next = par::try_map_range(n, |i| -> Result<f64, MeanFieldError> {
                if i == 0 || i == n - 1 {
                    return Ok(0.0);
                }
                let ux = (cur[i + 1] - cur[i - 1]) / (2.0 * h);
                let uxx = (cur[i + 1] - 2.0 * cur[i] + cur[i - 1]) / (h * h);
                let ham = model.hamiltonian.value(&[self.xs[i]], &[ux], &view)?;
                Ok(cur[i] + dt * (uxx - ham))
            })?;
            next[0] = 3.0 * next[1] - 3.0 * next[2] + next[3];
            next[n - 1] = 3.0 * next[n - 2] - 3.0 * next[n - 3] + next[n - 4];
            u[s - 1] = next;
        }

        let mut m = self.m0.clone();
        let mut density = vec![m.clone()];
        for s in 0..self.steps {
            let mu = self.flow_at(flow, s);
            let view = mu.view();
            let ux = gradient(&u[s], h);
            let drift = par::try_map_range(n, |i| -> Result<f64, MeanFieldError> {
                Ok(model
                    .hamiltonian
                    .maximizer(&[self.xs[i]], &[ux[i]], &view)?[0])
            })?;
            let flux: Vec<f64> = (0..n - 1)
                .map(|i| {
                    0.25 * (drift[i] + drift[i + 1]) * (m[i] + m[i + 1]) - (m[i + 1] - m[i]) / h
                })
                .collect();
            for i in 0..n {
                let right = if i + 1 < n { flux[i] } else { 0.0 };
                let left = if i > 0 { flux[i - 1] } else { 0.0 };
                m[i] -= dt / h * (right - left);
            }
            if (s + 1) % self.per_interval == 0 {
                density.push(m.clone());
            }
        }
        Ok(Sweep { u, density })
    }

    /// The undamped update `Φ((Id, u_x)_# m_t)` at every stored node.
    fn update(&self, sweep: &Sweep) -> Result<Vec<StateActionCloud>, MeanFieldError> {
        par::try_map_range(
            sweep.density.len(),
            |c| -> Result<StateActionCloud, MeanFieldError> {
                let s = c * self.per_interval;
                let ux = gradient(&sweep.u[s], self.h);
                let ys = quantile_particles(&self.xs, self.h, &sweep.density[c], self.particles);
                let ps: Vec<f64> = ys
                    .iter()
                    .map(|&y| linear_interp(&self.xs, &ux, y))
                    .collect();
                let nu = StateActionCloud::new(1, ys, ps)?;
                Ok(solve_phi(self.model, &nu, 1e-12)?)
            },
        )
    }
}

fn flow_distance(a: &[StateActionCloud], b: &[StateActionCloud]) -> Result<f64, MeanFieldError> {
    let d = par::try_map_range(a.len(), |c| {
        wasserstein(&a[c], &b[c], WassersteinOrder::One)
    })?;
    Ok(d.into_iter().fold(0.0, f64::max))
}

fn damp(old: &[StateActionCloud], new: &[StateActionCloud], theta: f64) -> Vec<StateActionCloud> {
    old.iter()
        .zip(new)
        .map(|(a, b)| {
            let mix = |p: &[f64], q: &[f64]| -> Vec<f64> {
                p.iter()
                    .zip(q)
                    .map(|(x, y)| (1.0 - theta) * x + theta * y)
                    .collect()
            };
            StateActionCloud::new(
                1,
                mix(a.states(), b.states()),
                mix(a.actions(), b.actions()),
            )
            .expect("finite flow")
        })
        .collect()
}

fn setup<'a>(
    model: &'a Model,
    grid: &PicardGrid,
    m0: &InitialDensity,
    opts: &PicardOptions,
) -> Result<Setup<'a>, MeanFieldError> {
    if model.dim != 1 || model.sigma0 != 0.0 {
        return Err(MeanFieldError::InvalidInput(format!(
            "the Picard solver needs d = 1 and sigma0 = 0, got d = {} and sigma0 = {}",
            model.dim, model.sigma0
        )));
    }
    if grid.points < 5 || !(grid.radius > 0.0) || !(m0.std > 0.0) {
        return Err(MeanFieldError::InvalidInput(
            "grid needs >= 5 points, positive radius and std".into(),
        ));
    }
    if opts.particles < 2 || opts.time_intervals < 1 || !(opts.damping > 0.0 && opts.damping <= 1.0)
    {
        return Err(MeanFieldError::InvalidInput(
            "invalid Picard options".into(),
        ));
    }
    let h = 2.0 * grid.radius / (grid.points - 1) as f64;
    let bound = h * h / 2.2;
    let dt_target = grid.dt.unwrap_or(bound);
    if dt_target > bound * (1.0 + 1e-12) {
        return Err(MeanFieldError::InvalidInput(format!(
            "dt = {dt_target:e} exceeds the stability bound {bound:e}"
        )));
    }
    let per_interval = (model.horizon / (dt_target * opts.time_intervals as f64) - 1e-9)
        .ceil()
        .max(1.0) as usize;
    let steps = per_interval * opts.time_intervals;
    let xs: Vec<f64> = (0..grid.points)
        .map(|i| -grid.radius + i as f64 * h)
        .collect();
    let m0v = gaussian_density(&xs, h, m0);
    Ok(Setup {
        model,
        h,
        dt: model.horizon / steps as f64,
        steps,
        per_interval,
        particles: opts.particles,
        m0: m0v,
        xs,
    })
}

fn initial_flow(s: &Setup, guess: &InitialGuess, intervals: usize) -> Vec<StateActionCloud> {
    let q = quantile_particles(&s.xs, s.h, &s.m0, s.particles);
    let mean = q.iter().sum::<f64>() / q.len() as f64;
    let states: Vec<f64> = q
        .iter()
        .map(|y| mean + guess.spread * (y - mean) + guess.shift)
        .collect();
    let cloud =
        StateActionCloud::new(1, states, vec![guess.action; s.particles]).expect("finite guess");
    vec![cloud; intervals + 1]
}

/// Runs the damped Picard loop until successive flows are within `opts.tol`
/// in time-sup `W_1` on the joint state-action clouds.
pub fn solve_mfgc_picard(
    model: &Model,
    grid: &PicardGrid,
    m0: &InitialDensity,
    opts: &PicardOptions,
) -> Result<MfgcSolution, MeanFieldError> {
    let s = setup(model, grid, m0, opts)?;
    let mut flow = initial_flow(&s, &opts.initial, opts.time_intervals);
    let mut history = Vec::new();
    for it in 1..=opts.max_iter {
        let sweep = s.sweep(&flow)?;
        let target = s.update(&sweep)?;
        let next = damp(&flow, &target, opts.damping);
        let dist = flow_distance(&flow, &next)?;
        history.push(dist);
        log::debug!("picard iteration {it}: W1 change {dist:.3e}");
        flow = next;
        if dist < opts.tol {
            let sweep = s.sweep(&flow)?;
            return Ok(MfgcSolution {
                times: (0..=opts.time_intervals)
                    .map(|c| (c * s.per_interval) as f64 * s.dt)
                    .collect(),
                value: (0..=opts.time_intervals)
                    .map(|c| sweep.u[c * s.per_interval].clone())
                    .collect(),
                density: sweep.density,
                xs: s.xs,
                dt: s.dt,
                action_flow: flow,
                iterations: it,
                history,
            });
        }
    }
    Err(MeanFieldError::PicardStalled {
        iterations: opts.max_iter,
        distance: history.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// Time-sup `W_1` moved by one further damped Picard step from `solution`.
pub fn picard_step_distance(
    model: &Model,
    grid: &PicardGrid,
    m0: &InitialDensity,
    opts: &PicardOptions,
    solution: &MfgcSolution,
) -> Result<f64, MeanFieldError> {
    let s = setup(model, grid, m0, opts)?;
    let sweep = s.sweep(&solution.action_flow)?;
    let target = s.update(&sweep)?;
    let next = damp(&solution.action_flow, &target, opts.damping);
    flow_distance(&solution.action_flow, &next)
}

/// Time-sup `W_1` between the flows of two solutions on the same time nodes.
pub fn flow_gap(a: &MfgcSolution, b: &MfgcSolution) -> Result<f64, MeanFieldError> {
    if a.action_flow.len() != b.action_flow.len() {
        return Err(MeanFieldError::InvalidInput(
            "flows have different time nodes".into(),
        ));
    }
    flow_distance(&a.action_flow, &b.action_flow)
}
