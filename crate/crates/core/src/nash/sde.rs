//! Closed-loop equilibrium dynamics driven by a grid solution.
//!
//! `dX^i = a^{N,i}(t, X) dt + sqrt(2) dW^i + sqrt(2 sigma0) dW^0`, with the
//! feedback `a^N(X, p)` evaluated at `p^j = D_j u^{N,j}(t, X)`, interpolated
//! multilinearly from grid differences of the nearest stored slice.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{NashError, ValueField};
use crate::fixedpoint::{solve_a_n_with, FixedPointOptions, PlayerVector, Strategy};
use crate::par;
use crate::stats::mean_and_stderr;

#[derive(Clone, Debug)]
pub struct TrajectoryBatch {
    pub seed: u64,
    pub t0: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub x0: PlayerVector,
    /// Number of coordinate clamps at the grid boundary, per path.
    pub clamp_counts: Vec<usize>,
    states: Vec<f64>,
}

impl TrajectoryBatch {
    fn width(&self) -> usize {
        self.x0.players() * self.x0.dim()
    }

    /// State of `path` after `step` steps (`step = 0` is `x0`).
    pub fn state(&self, path: usize, step: usize) -> &[f64] {
        let w = self.width();
        let off = (path * (self.n_steps + 1) + step) * w;
        &self.states[off..off + w]
    }

    pub fn time(&self, step: usize) -> f64 {
        self.t0 + step as f64 * self.dt
    }

    pub fn total_clamps(&self) -> usize {
        self.clamp_counts.iter().sum()
    }
}

/// Gradient of `u^{N,1}` along every axis on one stored slice.
struct GradientSlice {
    axes: Vec<Vec<f64>>,
}

fn gradient_slice(field: &ValueField, k: usize) -> GradientSlice {
    let g = &field.grid;
    let u = field.slice(k);
    let axes = (0..g.axes())
        .map(|q| par::map_range(g.node_count(), |node| g.d1(u, node, q)))
        .collect();
    GradientSlice { axes }
}

struct Caches {
    slice_of_step: Vec<usize>,
    slices: Vec<Option<GradientSlice>>,
}

impl Caches {
    fn build(field: &ValueField, t0: f64, dt: f64, n_steps: usize) -> Self {
        let slice_of_step: Vec<usize> = (0..=n_steps)
            .map(|s| field.nearest_slice(t0 + s as f64 * dt))
            .collect();
        let mut slices: Vec<Option<GradientSlice>> =
            (0..field.slice_count()).map(|_| None).collect();
        for &k in &slice_of_step {
            if slices[k].is_none() {
                slices[k] = Some(gradient_slice(field, k));
            }
        }
        Self {
            slice_of_step,
            slices,
        }
    }

    fn at_step(&self, step: usize) -> &GradientSlice {
        self.slices[self.slice_of_step[step]]
            .as_ref()
            .expect("cached")
    }
}

fn swap_point(x: &[f64], dim: usize, j: usize) -> Vec<f64> {
    let mut y = x.to_vec();
    for c in 0..dim {
        y.swap(c, j * dim + c);
    }
    y
}

/// `D_j u^{N,1}` interpolated at an arbitrary point.
fn interp_gradient(field: &ValueField, grads: &GradientSlice, x: &[f64], j: usize) -> Vec<f64> {
    let d = field.grid.dim;
    (0..d)
        .map(|c| field.grid.interpolate(&grads.axes[j * d + c], x).0)
        .collect()
}

/// Euler–Maruyama simulation of the closed-loop system from `(t0, x0)`.
///
/// Path `k` draws its noise from a ChaCha8 stream `k` keyed by `seed`, so
/// results do not depend on the number of worker threads.
pub fn simulate_closed_loop(
    field: &ValueField,
    t0: f64,
    x0: &PlayerVector,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<TrajectoryBatch, NashError> {
    let grid = &field.grid;
    let model = &field.model;
    let (n, d) = (grid.players, grid.dim);
    if x0.players() != n || x0.dim() != d {
        return Err(NashError::OutsideGrid(format!(
            "initial condition is {}x{}, grid expects {n}x{d}",
            x0.players(),
            x0.dim()
        )));
    }
    let horizon = grid.horizon();
    if !(0.0..horizon).contains(&t0) || x0.as_slice().iter().any(|v| v.abs() > grid.radius) {
        return Err(NashError::OutsideGrid(format!(
            "(t0, x0) = ({t0}, {:?}) is outside the grid",
            x0.as_slice()
        )));
    }
    if n_steps == 0 || n_paths == 0 {
        return Err(NashError::OutsideGrid(
            "need at least one path and one step".into(),
        ));
    }
    let dt = (horizon - t0) / n_steps as f64;
    let caches = Caches::build(field, t0, dt, n_steps);
    let fp = FixedPointOptions {
        tol: 1e-12,
        strategy: Strategy::Newton,
        ..FixedPointOptions::default()
    };
    let idio = (2.0 * dt).sqrt();
    let common = (2.0 * model.sigma0 * dt).sqrt();
    let width = n * d;

    let paths = par::try_map_range(n_paths, |path| -> Result<(Vec<f64>, usize), NashError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path as u64);
        let mut states = Vec::with_capacity((n_steps + 1) * width);
        let mut x = x0.as_slice().to_vec();
        states.extend_from_slice(&x);
        let mut clamps = 0;
        for step in 0..n_steps {
            let grads = caches.at_step(step);
            let mut p = Vec::with_capacity(width);
            for j in 0..n {
                p.extend(interp_gradient(field, grads, &swap_point(&x, d, j), 0));
            }
            let xv =
                PlayerVector::new(n, d, x.clone()).map_err(|e| NashError::FixedPointFailure {
                    coords: x.clone(),
                    source: e,
                })?;
            let pv = PlayerVector::new(n, d, p).map_err(|e| NashError::FixedPointFailure {
                coords: x.clone(),
                source: e,
            })?;
            let a = solve_a_n_with(model, &xv, &pv, &fp)
                .map_err(|e| NashError::FixedPointFailure {
                    coords: x.clone(),
                    source: e,
                })?
                .actions;
            let w0: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            for q in 0..width {
                let z: f64 = StandardNormal.sample(&mut rng);
                let mut v = x[q] + a.as_slice()[q] * dt + idio * z + common * w0[q % d];
                if v.abs() > grid.radius {
                    v = v.clamp(-grid.radius, grid.radius);
                    clamps += 1;
                }
                x[q] = v;
            }
            states.extend_from_slice(&x);
        }
        Ok((states, clamps))
    })?;

    let mut states = Vec::with_capacity(n_paths * (n_steps + 1) * width);
    let mut clamp_counts = Vec::with_capacity(n_paths);
    for (s, c) in paths {
        states.extend(s);
        clamp_counts.push(c);
    }
    Ok(TrajectoryBatch {
        seed,
        t0,
        dt,
        n_steps,
        n_paths,
        x0: x0.clone(),
        clamp_counts,
        states,
    })
}

/// Monte-Carlo estimate (mean, standard error) of
/// `E int_{t0}^T sum_{j != 1} |D_j u^{N,1}(t, X_t)|^2 dt` along the batch,
/// using the left-point rule in time.
pub fn offdiag_gradient_energy(field: &ValueField, batch: &TrajectoryBatch) -> (f64, f64) {
    let caches = Caches::build(field, batch.t0, batch.dt, batch.n_steps);
    let n = field.grid.players;
    let per_path = par::map_range(batch.n_paths, |path| {
        let mut acc = 0.0;
        for step in 0..batch.n_steps {
            let x = batch.state(path, step);
            let grads = caches.at_step(step);
            for j in 1..n {
                let g = interp_gradient(field, grads, x, j);
                acc += batch.dt * g.iter().map(|v| v * v).sum::<f64>();
            }
        }
        acc
    });
    mean_and_stderr(&per_path)
}
