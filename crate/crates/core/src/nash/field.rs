//! Explicit backward solver for the symmetric Nash system on a grid.

use nalgebra::DMatrix;

use super::{Grid, NashError};
use crate::fixedpoint::{solve_a_n_with, FixedPointOptions, PlayerVector, Strategy};
use crate::model::{CloudView, Model, StateView};
use crate::par;

/// Storage and fixed-point settings for [`solve_nash_grid_with`].
#[derive(Clone, Debug)]
pub struct NashGridOptions {
    /// Intermediate slices are subsampled so that stored values stay below
    /// this many bytes; the terminal and initial slices are always kept.
    pub max_stored_bytes: usize,
    pub fixed_point: FixedPointOptions,
    /// A step fails when the slice maximum exceeds `growth_limit` times the
    /// previous maximum (floored at 1).
    pub growth_limit: f64,
}

impl Default for NashGridOptions {
    fn default() -> Self {
        Self {
            max_stored_bytes: 1 << 29,
            fixed_point: FixedPointOptions {
                tol: 1e-12,
                strategy: Strategy::Newton,
                ..FixedPointOptions::default()
            },
            growth_limit: 10.0,
        }
    }
}

/// The value function `u^{N,1}` of the first player on every stored time
/// slice. Other players follow by symmetry:
/// `u^{N,i}(t, x) = u^{N,1}(t, x with players 1 and i exchanged)`.
#[derive(Clone, Debug)]
pub struct ValueField {
    pub grid: Grid,
    pub model: Model,
    slices: Vec<Vec<f64>>,
    steps: Vec<usize>,
}

impl ValueField {
    pub fn from_parts(grid: Grid, model: Model, slices: Vec<Vec<f64>>, steps: Vec<usize>) -> Self {
        Self {
            grid,
            model,
            slices,
            steps,
        }
    }

    pub fn players(&self) -> usize {
        self.grid.players
    }

    pub fn slice_count(&self) -> usize {
        self.slices.len()
    }

    /// Values of stored slice `k` (slices are ordered by increasing time).
    pub fn slice(&self, k: usize) -> &[f64] {
        &self.slices[k]
    }

    pub fn slices(&self) -> &[Vec<f64>] {
        &self.slices
    }

    /// Time-step index of stored slice `k`.
    pub fn step_of(&self, k: usize) -> usize {
        self.steps[k]
    }

    pub fn time(&self, k: usize) -> f64 {
        self.steps[k] as f64 * self.grid.dt
    }

    pub fn terminal_slice(&self) -> usize {
        self.slices.len() - 1
    }

    /// Stored slice whose time is closest to `t`.
    pub fn nearest_slice(&self, t: f64) -> usize {
        (0..self.slices.len())
            .min_by(|&a, &b| {
                (self.time(a) - t)
                    .abs()
                    .total_cmp(&(self.time(b) - t).abs())
            })
            .unwrap_or(0)
    }

    /// `u^{N,i}` at a node of stored slice `k`.
    pub fn value(&self, k: usize, node: usize, i: usize) -> f64 {
        self.slices[k][self.grid.swap_players(node, 0, i)]
    }

    fn swapped_player(i: usize, j: usize) -> usize {
        if j == i {
            0
        } else if j == 0 {
            i
        } else {
            j
        }
    }

    /// `D_j u^{N,i}` at a node.
    pub fn gradient(&self, k: usize, node: usize, i: usize, j: usize) -> Vec<f64> {
        let g = &self.grid;
        let src = g.swap_players(node, 0, i);
        let jj = Self::swapped_player(i, j);
        (0..g.dim)
            .map(|c| g.d1(&self.slices[k], src, jj * g.dim + c))
            .collect()
    }

    /// `D_{jk} u^{N,i}` at a node; entry `(r, c)` differentiates coordinate
    /// `r` of player `j` and coordinate `c` of player `k`.
    pub fn hessian(
        &self,
        k_slice: usize,
        node: usize,
        i: usize,
        j: usize,
        k: usize,
    ) -> DMatrix<f64> {
        let g = &self.grid;
        let src = g.swap_players(node, 0, i);
        let (jj, kk) = (Self::swapped_player(i, j), Self::swapped_player(i, k));
        DMatrix::from_fn(g.dim, g.dim, |r, c| {
            g.d11(&self.slices[k_slice], src, jj * g.dim + r, kk * g.dim + c)
        })
    }
}

fn stored_stride(grid: &Grid, max_bytes: usize) -> usize {
    let per_slice = grid.node_count() * std::mem::size_of::<f64>();
    let max_slices = (max_bytes / per_slice.max(1)).max(2);
    let mut stride = 1;
    while grid.t_steps / stride + 2 > max_slices {
        stride += 1;
    }
    stride
}

/// Solves the symmetric Nash system backward from `u(T) = G` with default
/// options.
pub fn solve_nash_grid(model: &Model, grid: &Grid) -> Result<ValueField, NashError> {
    solve_nash_grid_with(model, grid, &NashGridOptions::default())
}

/// Explicit Euler in time, backward from the terminal slice:
///
/// `u(t - dt) = u + dt (sum_j Lap_j u + sigma0 sum_{jk} tr D_jk u - H^{N,1} + sum_{j != 1} a^j . D_j u)`
///
/// at interior nodes, where `a = a^N(x, p)` with `p^j = D_j u^{N,j}(x)`
/// obtained by symmetry. Boundary nodes are filled by quadratic
/// extrapolation after each step.
pub fn solve_nash_grid_with(
    model: &Model,
    grid: &Grid,
    opts: &NashGridOptions,
) -> Result<ValueField, NashError> {
    if grid.dim != model.dim {
        return Err(NashError::InvalidGrid(format!(
            "grid dimension {} but model dimension {}",
            grid.dim, model.dim
        )));
    }
    if (grid.horizon() - model.horizon).abs() > 1e-9 * model.horizon.max(1.0) {
        return Err(NashError::InvalidGrid(format!(
            "grid horizon {} differs from model horizon {}",
            grid.horizon(),
            model.horizon
        )));
    }
    let bound = Grid::max_stable_dt(
        grid.radius,
        grid.points_per_axis,
        grid.players,
        grid.dim,
        model.sigma0,
    );
    if grid.dt > bound * (1.0 + 1e-12) {
        return Err(NashError::InvalidGrid(format!(
            "time step {:.4e} violates the stability bound {bound:.4e} for sigma0 = {}",
            grid.dt, model.sigma0
        )));
    }
    let d = grid.dim;
    let nodes = grid.node_count();

    let mut current = vec![0.0; nodes];
    par::fill_indexed(&mut current, |node| -> Result<f64, NashError> {
        let x = grid.coords(node);
        let m = StateView::excluding(d, &x, 0);
        Ok(model.terminal.value(&x[..d], &m))
    })?;

    let stride = stored_stride(grid, opts.max_stored_bytes);
    let mut slices = vec![current.clone()];
    let mut steps = vec![grid.t_steps];
    let mut prev_max = max_abs(&current);

    for step in (0..grid.t_steps).rev() {
        let next = backward_step(model, grid, &current, opts)?;
        let next_max = max_abs(&next);
        if !next_max.is_finite() || next_max > opts.growth_limit * prev_max.max(1.0) {
            return Err(NashError::StabilityViolation {
                step,
                time: step as f64 * grid.dt,
                previous_max: prev_max,
                new_max: next_max,
            });
        }
        prev_max = next_max;
        current = next;
        if step == 0 || step % stride == 0 {
            slices.push(current.clone());
            steps.push(step);
        }
        log::debug!("nash grid: step {step} done, max |u| = {next_max:.4e}");
    }
    slices.reverse();
    steps.reverse();
    Ok(ValueField {
        grid: grid.clone(),
        model: model.clone(),
        slices,
        steps,
    })
}

fn max_abs(u: &[f64]) -> f64 {
    u.iter().fold(
        0.0f64,
        |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) },
    )
}

fn backward_step(
    model: &Model,
    grid: &Grid,
    u: &[f64],
    opts: &NashGridOptions,
) -> Result<Vec<f64>, NashError> {
    let (n_players, d) = (grid.players, grid.dim);
    let nodes = grid.node_count();
    // D_1 u^{N,1} at every interior node.
    let mut g0 = vec![0.0; nodes * d];
    {
        let per_node: Vec<[f64; 3]> = par::map_range(nodes, |node| {
            let mut v = [0.0; 3];
            if grid.is_interior(node) {
                for (c, slot) in v.iter_mut().enumerate().take(d) {
                    *slot = grid.d1(u, node, c);
                }
            }
            v
        });
        for (node, v) in per_node.iter().enumerate() {
            g0[node * d..(node + 1) * d].copy_from_slice(&v[..d]);
        }
    }
    let sigma0 = model.sigma0;
    let axes = grid.axes();
    let mut next = vec![0.0; nodes];
    par::fill_indexed(&mut next, |node| -> Result<f64, NashError> {
        if !grid.is_interior(node) {
            return Ok(0.0);
        }
        let x = grid.coords(node);
        let mut p = vec![0.0; n_players * d];
        for j in 0..n_players {
            let src = grid.swap_players(node, 0, j);
            p[j * d..(j + 1) * d].copy_from_slice(&g0[src * d..(src + 1) * d]);
        }
        let xv = PlayerVector::new(n_players, d, x.clone()).map_err(|e| {
            NashError::FixedPointFailure {
                coords: x.clone(),
                source: e,
            }
        })?;
        let pv = PlayerVector::new(n_players, d, p).map_err(|e| NashError::FixedPointFailure {
            coords: x.clone(),
            source: e,
        })?;
        let a = solve_a_n_with(model, &xv, &pv, &opts.fixed_point)
            .map_err(|e| NashError::FixedPointFailure {
                coords: x.clone(),
                source: e,
            })?
            .actions;
        let mu = CloudView::excluding(d, xv.as_slice(), a.as_slice(), 0);
        let h_val = model
            .hamiltonian
            .value(&x[..d], pv.row(0), &mu)
            .map_err(|e| NashError::FixedPointFailure {
                coords: x.clone(),
                source: e.into(),
            })?;
        let mut rhs = -h_val;
        for q in 0..axes {
            rhs += grid.d2(u, node, q);
        }
        for q in d..axes {
            rhs += a.as_slice()[q] * grid.d1(u, node, q);
        }
        if sigma0 != 0.0 {
            let mut common = 0.0;
            for c in 0..d {
                for j in 0..n_players {
                    for k in 0..n_players {
                        common += grid.d11(u, node, j * d + c, k * d + c);
                    }
                }
            }
            rhs += sigma0 * common;
        }
        Ok(u[node] + grid.dt * rhs)
    })?;
    grid.extrapolate_boundary(&mut next);
    Ok(next)
}
