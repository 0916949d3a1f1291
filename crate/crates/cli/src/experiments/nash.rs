//! `nash-solve` and `sde-norms`: grid solutions of the Nash system.

use mfgc::fixedpoint::PlayerVector;
use mfgc::nash::{
    derivative_decay_report, max_cross_gradient, offdiag_gradient_energy, simulate_closed_loop,
    solve_nash_grid, solve_nash_riccati, DecayProbes, Grid, ValueField,
};
use mfgc::report::{fmt_float, Check, CsvTable};

use super::{decreasing_check, Context, RunError};

/// Sizes below this count as exactly zero cross-player coupling.
const DECOUPLED: f64 = 1e-10;

fn grid_for(ctx: &Context, n: usize) -> Result<Grid, RunError> {
    let c = ctx.config;
    let dt = c.dt_factor * Grid::max_stable_dt(c.radius, c.points, n, c.dim, c.sigma0);
    Ok(Grid::new(
        c.radius,
        c.points,
        n,
        c.dim,
        c.horizon,
        c.sigma0,
        Some(dt),
    )?)
}

fn solve_grid(ctx: &Context, n: usize) -> Result<ValueField, RunError> {
    let grid = grid_for(ctx, n)?;
    log::info!(
        "solving N={n} on {} nodes x {} steps",
        grid.node_count(),
        grid.t_steps
    );
    Ok(solve_nash_grid(&ctx.model, &grid)?)
}

/// Largest deviation from the Riccati solution on the inner half of the grid.
pub fn riccati_error(ctx: &Context, field: &ValueField) -> Result<f64, RunError> {
    let exact = solve_nash_riccati(&ctx.model, field.grid.players)?;
    let g = &field.grid;
    let mut worst: f64 = 0.0;
    for k in 0..field.slice_count() {
        let t = field.time(k);
        for node in (0..g.node_count()).filter(|&v| g.within(v, 0.5)) {
            worst = worst.max((field.slice(k)[node] - exact.value(t, &g.coords(node))).abs());
        }
    }
    Ok(worst)
}

/// Decreasing band for coupled models, vanishing band for decoupled ones.
fn coupling_check(name: &str, values: &[f64]) -> Option<Check> {
    if values.len() < 2 {
        return None;
    }
    if values[0] < DECOUPLED {
        let worst = values.iter().copied().fold(0.0, f64::max);
        return Some(Check::new(
            name,
            worst,
            format!("< {DECOUPLED}"),
            worst < DECOUPLED,
        ));
    }
    Some(decreasing_check(name, values))
}

pub fn solve(ctx: &mut Context) -> Result<(), RunError> {
    let c = ctx.config;
    let mut summary = CsvTable::new(&[
        "N",
        "points",
        "dt",
        "t_steps",
        "max_cross_gradient",
        "riccati_error",
    ]);
    let mut decay = CsvTable::new(&["N", "class", "omega", "max_norm", "norm_over_omega"]);
    let mut cross = Vec::new();
    for &n in &c.n_list {
        let field = solve_grid(ctx, n)?;
        let probes = DecayProbes::inner(&field, 0.5);
        let g = max_cross_gradient(&field, &probes);
        cross.push(g);
        for e in derivative_decay_report(&field, &probes, 2) {
            decay.push(vec![
                n.to_string(),
                e.class.label().to_string(),
                fmt_float(e.omega),
                fmt_float(e.max_norm),
                fmt_float(e.norm_over_omega()),
            ]);
        }
        let err = if ctx.model.lq.is_some() {
            let err = riccati_error(ctx, &field)?;
            ctx.check(Check::new(
                format!("riccati_error_N{n}"),
                err,
                format!("<= {}", c.riccati_tol),
                err <= c.riccati_tol,
            ));
            fmt_float(err)
        } else {
            String::new()
        };
        summary.push(vec![
            n.to_string(),
            c.points.to_string(),
            fmt_float(field.grid.dt),
            field.grid.t_steps.to_string(),
            fmt_float(g),
            err,
        ]);
    }
    ctx.write("nash-solve.csv", &summary)?;
    ctx.write("nash-decay.csv", &decay)?;
    if let Some(check) = coupling_check("max_cross_gradient", &cross) {
        ctx.check(check);
    }
    Ok(())
}

pub fn sde_norms(ctx: &mut Context) -> Result<(), RunError> {
    let c = ctx.config;
    let mut table = CsvTable::new(&["N", "paths", "steps", "energy", "stderr", "clamps"]);
    let mut energies = Vec::new();
    for &n in &c.n_list {
        let field = solve_grid(ctx, n)?;
        let x0 = PlayerVector::zeros(n, c.dim);
        let batch = simulate_closed_loop(&field, 0.0, &x0, c.paths, c.steps, ctx.seed())?;
        let (energy, se) = offdiag_gradient_energy(&field, &batch);
        energies.push(energy);
        table.push(vec![
            n.to_string(),
            c.paths.to_string(),
            c.steps.to_string(),
            fmt_float(energy),
            fmt_float(se),
            batch.total_clamps().to_string(),
        ]);
    }
    ctx.write("sde-norms.csv", &table)?;
    if let Some(check) = coupling_check("offdiag_gradient_energy", &energies) {
        ctx.check(check);
    }
    Ok(())
}
