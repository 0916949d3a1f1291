//! `master-residual`, `convergence` and `mfg-picard`.

use mfgc::meanfield::{
    convergence_report, flow_gap, master_residual, residual_probes, solve_master_lq,
    solve_mfgc_picard, ConvergenceProbes, GridLift, InitialDensity, InitialGuess, MasterLift,
    MeanFieldError, MfgcSolution, PicardGrid, PicardOptions, ProbeSpec, RiccatiLift,
};
use mfgc::nash::{solve_nash_grid, solve_nash_riccati, Grid};
use mfgc::report::{fmt_float, Check, CsvTable};
use mfgc::stats::{log_log_slope, median, non_increasing};

use super::{Context, RunError};
use crate::config::LiftKind;

fn riccati_lift(ctx: &Context, n: usize) -> Result<RiccatiLift, RunError> {
    Ok(RiccatiLift::new(
        solve_nash_riccati(&ctx.model, n)?,
        ctx.model.clone(),
    ))
}

pub fn residual(ctx: &mut Context) -> Result<(), RunError> {
    let c = ctx.config;
    if c.lift == LiftKind::Riccati {
        ctx.require_lq("the riccati lift")?;
    }
    let spec = ProbeSpec {
        count: c.probes,
        scale: c.probe_scale,
        seed: ctx.seed(),
        cloud_size: c.cloud_size,
    };
    let mut table = CsvTable::new(&["N", "probe", "t", "residual", "envelope", "ratio"]);
    let mut medians = Vec::new();
    for &n in &c.n_list {
        let rows = match c.lift {
            LiftKind::Riccati => {
                let lift = riccati_lift(ctx, n)?;
                master_residual(&lift, &residual_probes(&lift, &spec))?
            }
            LiftKind::Grid => {
                let dt = c.dt_factor * Grid::max_stable_dt(c.radius, c.points, n, c.dim, c.sigma0);
                let grid = Grid::new(c.radius, c.points, n, c.dim, c.horizon, c.sigma0, Some(dt))?;
                let field = solve_nash_grid(&ctx.model, &grid)?;
                let lift = GridLift::new(&field);
                master_residual(&lift, &residual_probes(&lift, &spec))?
            }
        };
        for r in &rows {
            table.push(vec![
                n.to_string(),
                r.probe.to_string(),
                fmt_float(r.t),
                fmt_float(r.residual),
                fmt_float(r.envelope),
                fmt_float(r.ratio()),
            ]);
        }
        let abs: Vec<f64> = rows.iter().map(|r| r.residual.abs()).collect();
        medians.push(median(&abs).unwrap_or(f64::NAN));
        log::info!(
            "master-residual N={n}: median |residual| {:.3e}",
            medians[medians.len() - 1]
        );
    }
    ctx.write("master-residual.csv", &table)?;
    if medians.len() >= 2 {
        let last = medians[medians.len() - 1];
        ctx.check(Check::new(
            "median_residual",
            last,
            "non-increasing in N",
            non_increasing(&medians),
        ));
    }
    Ok(())
}

pub fn convergence(ctx: &mut Context) -> Result<(), RunError> {
    let c = ctx.config;
    ctx.require_lq("convergence")?;
    let master = solve_master_lq(&ctx.model)?;
    let lifts = c
        .n_list
        .iter()
        .map(|&n| riccati_lift(ctx, n))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&dyn MasterLift> = lifts.iter().map(|l| l as &dyn MasterLift).collect();
    let probes = ConvergenceProbes {
        times: vec![0.0, 0.5 * c.horizon],
        points: [-1.0, 0.0, 1.0].iter().map(|&v| vec![v; c.dim]).collect(),
        scale: c.sample_scale,
    };
    let rows = convergence_report(&refs, &master, &probes)?;
    let mut table = CsvTable::new(&["N", "inv_N", "error", "probes"]);
    for r in &rows {
        table.push(vec![
            r.players.to_string(),
            fmt_float(1.0 / r.players as f64),
            fmt_float(r.error),
            r.probes.to_string(),
        ]);
    }
    ctx.write("convergence.csv", &table)?;
    if rows.len() >= 2 {
        let slope = convergence_slope(
            &rows
                .iter()
                .map(|r| (r.players, r.error))
                .collect::<Vec<_>>(),
        );
        ctx.check(Check::within(
            "error_slope_vs_inv_N",
            slope,
            c.convergence_band[0],
            c.convergence_band[1],
        ));
    }
    Ok(())
}

/// Least-squares slope of `log error` against `log(1/N)`.
pub fn convergence_slope(rows: &[(usize, f64)]) -> f64 {
    let xs: Vec<f64> = rows.iter().map(|r| 1.0 / r.0 as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
    log_log_slope(&xs, &ys).unwrap_or(f64::NAN)
}

/// Starting flows for the multi-start check; the first is the default guess.
fn start(k: usize) -> InitialGuess {
    let s = k as f64;
    InitialGuess {
        shift: 0.5 * s,
        spread: 1.0 + 0.5 * s,
        action: -0.25 * s,
    }
}

pub fn picard(ctx: &mut Context) -> Result<(), RunError> {
    let c = ctx.config;
    let grid = PicardGrid {
        radius: c.picard_radius,
        points: c.picard_points,
        dt: None,
    };
    let m0 = InitialDensity {
        mean: c.m0_mean,
        std: c.m0_std,
    };
    let opts = |k: usize| PicardOptions {
        damping: c.damping,
        tol: c.tol,
        max_iter: c.max_iter,
        particles: c.particles,
        time_intervals: c.time_intervals,
        initial: start(k),
    };
    let mut solutions: Vec<MfgcSolution> = Vec::new();
    for k in 0..c.starts {
        match solve_mfgc_picard(&ctx.model, &grid, &m0, &opts(k)) {
            Ok(sol) => {
                log::info!("picard start {k}: {} iterations", sol.iterations);
                solutions.push(sol);
            }
            Err(MeanFieldError::PicardStalled {
                iterations,
                distance,
            }) => {
                ctx.check(Check::new(
                    format!("picard_start_{k}"),
                    distance,
                    format!("< {} within {iterations} iterations", c.tol),
                    false,
                ));
                return Ok(());
            }
            Err(e) => return Err(e.into()),
        }
    }
    let sol = &solutions[0];
    let mut table = CsvTable::new(&["t", "mean", "variance", "mass"]);
    for (k, &t) in sol.times.iter().enumerate() {
        table.push(vec![
            fmt_float(t),
            fmt_float(sol.mean(k)),
            fmt_float(sol.variance(k)),
            fmt_float(sol.mass(k)),
        ]);
    }
    ctx.write("mfg-picard.csv", &table)?;
    let mut history = CsvTable::new(&["start", "iteration", "w1_change"]);
    for (k, s) in solutions.iter().enumerate() {
        for (it, d) in s.history.iter().enumerate() {
            history.push(vec![k.to_string(), (it + 1).to_string(), fmt_float(*d)]);
        }
    }
    ctx.write("mfg-picard-history.csv", &history)?;
    let final_change = sol.history.last().copied().unwrap_or(f64::NAN);
    ctx.check(Check::new(
        "picard_converged",
        final_change,
        format!("< {}", c.tol),
        final_change < c.tol,
    ));
    for (k, other) in solutions.iter().enumerate().skip(1) {
        let gap = flow_gap(sol, other)?;
        let bound = 5.0 * c.tol;
        ctx.check(Check::new(
            format!("multi_start_gap_{k}"),
            gap,
            format!("< {bound}"),
            gap < bound,
        ));
    }
    Ok(())
}
