//! Acceptance run: one PASS/FAIL line per criterion with its wall-clock budget.
//!
//! The process exits with status 0 after reporting, so that known failures
//! do not hide the other lines; set `MFGC_ACCEPTANCE_STRICT=1` to exit with
//! status 1 when any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use mfgc::fixedpoint::{
    assemble_blocks, jacobian_p, jacobian_x, solve_a_n, Flavor, PlayerVector, Variable,
};
use mfgc::meanfield::{
    flow_gap, solve_mfgc_picard, InitialDensity, InitialGuess, PicardGrid, PicardOptions,
};
use mfgc::model::{lq_model, nonlinear_model, LqSpec, Model};
use mfgc::monotonicity::{audit_discrete_m, audit_ll, LlTarget, Sampling};
use mfgc::nash::{
    max_cross_gradient, simulate_closed_loop, solve_nash_grid, solve_nash_riccati, DecayProbes,
    Grid, ValueField,
};
use mfgc::report::Summary;
use mfgc::stats::{mean_and_stderr, strictly_decreasing};
use mfgc_cli::{experiments, Experiment, ExperimentConfig};

type Outcome = Result<(bool, String), String>;

fn criterion(id: &str, title: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = f();
    let elapsed = start.elapsed();
    let in_budget = elapsed <= budget;
    let (pass, detail) = match result {
        Ok((pass, detail)) => (pass && in_budget, detail),
        Err(e) => (false, format!("error: {e}")),
    };
    println!(
        "{} {id} {title}: {detail} [{:.2} s / {} s{}]",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs(),
        if in_budget { "" } else { ", over budget" }
    );
    pass
}

fn spec(lambda: f64) -> LqSpec {
    LqSpec {
        dim: 1,
        lambda,
        c_x: 0.5,
        q_x: 0.5,
        c_g: 1.0,
        q_g: 0.0,
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> PlayerVector {
    PlayerVector::new(
        n,
        1,
        (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
    .unwrap()
}

/// Runs `experiment` in-process on a config given as TOML text.
fn run_experiment(experiment: Experiment, toml: &str) -> Result<Summary, String> {
    let config =
        ExperimentConfig::parse(toml, Path::new("acceptance.toml")).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    experiments::run(experiment, &config, dir.path()).map_err(|e| e.to_string())
}

fn check_value(summary: &Summary, name: &str) -> Result<(bool, f64), String> {
    summary
        .checks
        .iter()
        .find(|c| c.name == name)
        .map(|c| (c.pass, c.value))
        .ok_or_else(|| format!("no `{name}` band in the {} summary", summary.experiment))
}

/// Direct solve of `(I + λ/(N-1)(J - I)) a = -p`.
fn lq_oracle(lambda: f64, p: &[f64]) -> DVector<f64> {
    let n = p.len();
    let b = lambda / (n - 1) as f64;
    let m = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { b });
    -m.lu().solve(&DVector::from_column_slice(p)).unwrap()
}

fn c1_fixed_point_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for lambda in [-0.5, -0.25, 0.25, 0.5] {
        let model = lq_model(spec(lambda), 0.0, 1.0).map_err(|e| e.to_string())?;
        for n in 2..=64 {
            let x = gaussian(&mut rng, n);
            let p = gaussian(&mut rng, n);
            let a = solve_a_n(&model, &x, &p, 1e-14)
                .map_err(|e| e.to_string())?
                .actions;
            let exact = lq_oracle(lambda, p.as_slice());
            for (u, v) in a.as_slice().iter().zip(exact.iter()) {
                worst = worst.max((u - v).abs());
            }
        }
    }
    Ok((
        worst < 1e-10,
        format!("max |a - a_direct| = {worst:.2e} over N = 2..64, 4 lambdas"),
    ))
}

fn tanh_model() -> Model {
    nonlinear_model(0.1, spec(0.5), 0.0, 1.0).unwrap()
}

fn c2_jacobian_identity() -> Outcome {
    let model = tanh_model();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 32;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let x = gaussian(&mut rng, n);
        let p = gaussian(&mut rng, n);
        let a = solve_a_n(&model, &x, &p, 1e-13)
            .map_err(|e| e.to_string())?
            .actions;
        let m = assemble_blocks(&model, &x, &a, Flavor::M).matrix;
        let jp = jacobian_p(&model, &x, &a)
            .map_err(|e| e.to_string())?
            .matrix;
        worst = worst.max((m * jp + DMatrix::identity(n, n)).amax());
    }
    Ok((
        worst < 1e-8,
        format!("max |M Dp a + I| = {worst:.2e} at 50 points, N = 32"),
    ))
}

fn c3_finite_differences() -> Outcome {
    let model = tanh_model();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 8;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for probe in 0..20 {
        let x = gaussian(&mut rng, n);
        let p = gaussian(&mut rng, n);
        let a = solve_a_n(&model, &x, &p, 1e-13)
            .map_err(|e| e.to_string())?
            .actions;
        let (variable, jac) = if probe % 2 == 0 {
            (Variable::P, jacobian_p(&model, &x, &a))
        } else {
            (Variable::X, jacobian_x(&model, &x, &a))
        };
        let jac = jac.map_err(|e| e.to_string())?;
        let j = rng.gen_range(0..n);
        let shift = |delta: f64| {
            let (mut xs, mut ps) = (x.clone(), p.clone());
            match variable {
                Variable::P => ps.row_mut(j)[0] += delta,
                Variable::X => xs.row_mut(j)[0] += delta,
            }
            solve_a_n(&model, &xs, &ps, 1e-13).map(|r| r.actions)
        };
        let up = shift(h).map_err(|e| e.to_string())?;
        let dn = shift(-h).map_err(|e| e.to_string())?;
        for i in 0..n {
            let fd = (up.row(i)[0] - dn.row(i)[0]) / (2.0 * h);
            let an = jac.block(i, j)[(0, 0)];
            if an.abs() > 1e-8 || fd.abs() > 1e-8 {
                worst = worst.max((an - fd).abs() / an.abs().max(1e-3));
            }
        }
    }
    Ok((
        worst < 1e-4,
        format!("max relative error {worst:.2e} over 20 probes"),
    ))
}

fn c4_decay_scaling() -> Outcome {
    let summary = run_experiment(
        Experiment::FixedpointDecay,
        r#"
seed = 4
n_list = [8, 16, 32, 64, 128]
model = "lq-tanh"
eps = 0.1
lambda = 0.5
c_x = 0.5
q_x = 0.5
c_g = 1.0
probe_players = 3
order = 2
"#,
    )?;
    let (p1, s1) = check_value(&summary, "first_order_slope")?;
    let (p2, s2) = check_value(&summary, "second_order_distinct_slope")?;
    Ok((
        p1 && p2,
        format!("first-order slope {s1:.3} in [-1.3, -0.7], distinct second-order slope {s2:.3} in [-2.5, -1.5]"),
    ))
}

fn c5_discrete_monotonicity() -> Outcome {
    let sampling = Sampling {
        samples: 100,
        cloud_size: 0,
        seed: 5,
        scale: 1.0,
    };
    let families = |lambda: f64| -> Result<Vec<Model>, String> {
        Ok(vec![
            lq_model(spec(lambda), 0.0, 1.0).map_err(|e| e.to_string())?,
            nonlinear_model(0.1, spec(lambda), 0.0, 1.0).map_err(|e| e.to_string())?,
        ])
    };
    let mut monotone_min = f64::INFINITY;
    for model in families(0.5)? {
        for n in [4, 16, 64] {
            let r = audit_discrete_m(&model, n, &sampling).map_err(|e| e.to_string())?;
            monotone_min = monotone_min.min(r.worst_value);
        }
    }
    let mut control = Vec::new();
    for model in families(-0.9)? {
        let mut worst = f64::INFINITY;
        for n in [4, 16, 64] {
            let r = audit_discrete_m(&model, n, &sampling).map_err(|e| e.to_string())?;
            worst = worst.min(r.worst_value);
        }
        control.push((model.name.clone(), worst));
    }
    let monotone_ok = monotone_min > 0.0;
    let control_ok = control.iter().all(|(_, w)| *w < 0.0);
    let control_text: Vec<String> = control
        .iter()
        .map(|(n, w)| format!("{n} {w:.3e}"))
        .collect();
    Ok((
        monotone_ok && control_ok,
        format!(
            "monotone min lambda_min {monotone_min:.3e} (> 0: {monotone_ok}); lambda = -0.9 control min {} (< 0 expected: {control_ok})",
            control_text.join(", ")
        ),
    ))
}

fn c6_ll_sign() -> Outcome {
    let sampling = Sampling {
        samples: 100,
        cloud_size: 8,
        seed: 6,
        scale: 1.0,
    };
    let mut max_gap: f64 = 0.0;
    let mut ok = true;
    let mut notes = Vec::new();
    for lambda in [0.5, -0.5] {
        let s = LqSpec {
            q_x: 0.0,
            ..spec(lambda)
        };
        let model = lq_model(s, 0.0, 1.0).map_err(|e| e.to_string())?;
        let r = audit_ll(&model, LlTarget::Lagrangian, &sampling).map_err(|e| e.to_string())?;
        for k in 0..sampling.samples {
            // Draw order X, alpha, X', alpha'.
            let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
            rng.set_stream(k as u64);
            let blocks: Vec<f64> = (0..4 * sampling.cloud_size)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let mean = |b: usize| {
                blocks[b * sampling.cloud_size..(b + 1) * sampling.cloud_size]
                    .iter()
                    .sum::<f64>()
                    / sampling.cloud_size as f64
            };
            let gap = mean(1) - mean(3);
            max_gap = max_gap.max((r.values[k] - lambda * gap * gap).abs());
        }
        let expected = lambda > 0.0;
        let witness = r.witnesses.first().map(|w| w.value);
        ok &= r.pass == expected && (expected || witness.is_some_and(|w| w < 0.0));
        notes.push(format!(
            "lambda {lambda}: pass={} witness={}",
            r.pass,
            witness.map_or("none".into(), |w| format!("{w:.3e}"))
        ));
    }
    ok &= max_gap < 1e-12;
    Ok((
        ok,
        format!(
            "{}; max |value - lambda gap^2| = {max_gap:.1e}",
            notes.join(", ")
        ),
    ))
}

fn coupled_lq() -> Model {
    let s = LqSpec {
        lambda: 0.5,
        c_g: 1.0,
        ..LqSpec::default()
    };
    lq_model(s, 0.0, 1.0).unwrap()
}

fn inner_error(field: &ValueField, model: &Model) -> Result<f64, String> {
    let exact = solve_nash_riccati(model, field.grid.players).map_err(|e| e.to_string())?;
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

fn c7_nash_vs_riccati() -> Outcome {
    let model = coupled_lq();
    let radius = 4.0;
    let dt_fine = 0.5 * Grid::max_stable_dt(radius, 65, 2, 1, 0.0);
    let solve = |n: usize, dt: f64| -> Result<f64, String> {
        let grid = Grid::new(radius, n, 2, 1, 1.0, 0.0, Some(dt)).map_err(|e| e.to_string())?;
        let field = solve_nash_grid(&model, &grid).map_err(|e| e.to_string())?;
        inner_error(&field, &model)
    };
    let fine = solve(65, dt_fine)?;
    let coarse = solve(33, 2.0 * dt_fine)?;
    let ratio = coarse / fine;
    Ok((
        fine <= 5e-3 && (1.5..=3.0).contains(&ratio),
        format!("inner-half error {fine:.3e} at n = 65 (<= 5e-3), refinement ratio {ratio:.3} in [1.5, 3]"),
    ))
}

fn c8_cross_derivative_trend() -> Outcome {
    let model = coupled_lq();
    let mut values = Vec::new();
    for n in [2, 3, 4] {
        let grid = Grid::new(3.0, 17, n, 1, 1.0, 0.0, None).map_err(|e| e.to_string())?;
        let field = solve_nash_grid(&model, &grid).map_err(|e| e.to_string())?;
        values.push(max_cross_gradient(&field, &DecayProbes::inner(&field, 0.5)));
    }
    let text: Vec<String> = values.iter().map(|v| format!("{v:.4e}")).collect();
    Ok((
        strictly_decreasing(&values),
        format!(
            "max cross gradient over N = 2, 3, 4: {} (strictly decreasing)",
            text.join(", ")
        ),
    ))
}

const MASTER_LQ: &str = r#"
seed = 9
model = "lq"
lambda = 0.3
c_x = 0.5
q_x = 0.5
c_g = 1.0
q_g = 0.5
"#;

fn c9_master_trend() -> Outcome {
    let residual = run_experiment(
        Experiment::MasterResidual,
        &format!("{MASTER_LQ}n_list = [2, 3, 4]\nprobes = 50\n"),
    )?;
    let (p1, median) = check_value(&residual, "median_residual")?;
    let conv = run_experiment(
        Experiment::Convergence,
        &format!("{MASTER_LQ}n_list = [2, 4, 8, 16]\n"),
    )?;
    let (p2, slope) = check_value(&conv, "error_slope_vs_inv_N")?;
    Ok((
        p1 && p2,
        format!(
            "median residual non-increasing over N = 2, 3, 4: {p1} (N = 4: {median:.3e}); error slope vs 1/N {slope:.3} in [0.5, 1.5]"
        ),
    ))
}

fn c10_sde_moments() -> Outcome {
    let sigma0 = 0.5;
    let model = lq_model(LqSpec::default(), sigma0, 1.0).map_err(|e| e.to_string())?;
    let grid = Grid::new(8.0, 13, 2, 1, 1.0, sigma0, None).map_err(|e| e.to_string())?;
    let field = solve_nash_grid(&model, &grid).map_err(|e| e.to_string())?;
    let x0 = PlayerVector::zeros(2, 1);
    let batch =
        simulate_closed_loop(&field, 0.0, &x0, 10_000, 10, 10).map_err(|e| e.to_string())?;
    let ends: Vec<f64> = (0..batch.n_paths).map(|k| batch.state(k, 10)[0]).collect();
    let (m1, se1) = mean_and_stderr(&ends);
    let squares: Vec<f64> = ends.iter().map(|v| v * v).collect();
    let (m2, se2) = mean_and_stderr(&squares);
    let exact = 2.0 * (1.0 + sigma0);
    let moments_ok = m1.abs() < 3.0 * se1 && (m2 - exact).abs() < 3.0 * se2;

    let norms = run_experiment(
        Experiment::SdeNorms,
        r#"
seed = 10
n_list = [2, 3, 4]
model = "lq"
lambda = 0.5
c_g = 1.0
radius = 3.0
points = 13
paths = 2000
steps = 40
"#,
    )?;
    let (decreasing, ratio) = check_value(&norms, "offdiag_gradient_energy")?;
    Ok((
        moments_ok && decreasing,
        format!(
            "zero drift: mean {m1:.3e} (3se {:.1e}), E|X_T|^2 {m2:.4} vs {exact} (3se {:.1e}); energy decreasing over N = 2, 3, 4: {decreasing} (last ratio {ratio:.3})",
            3.0 * se1,
            3.0 * se2
        ),
    ))
}

/// Mean and variance of the LQ mean-field equilibrium flow: backward RK4 for
/// the feedback coefficients, then forward RK4 for the moments.
fn moment_oracle(
    s: &LqSpec,
    horizon: f64,
    mean0: f64,
    var0: f64,
    times: &[f64],
) -> Vec<(f64, f64)> {
    let steps = 20_000;
    let h = horizon / steps as f64;
    let lam = s.lambda;
    let f = |a: f64, b: f64| -> (f64, f64) {
        let sum = a + b;
        let w = b - lam * sum / (1.0 + lam);
        (a * a - s.c_x, a * w + s.c_x * s.q_x + sum * b / (1.0 + lam))
    };
    let mut coef = vec![(0.0, 0.0); steps + 1];
    let (mut a, mut b) = (s.c_g, -s.c_g * s.q_g);
    coef[steps] = (a, b);
    for k in (0..steps).rev() {
        let k1 = f(a, b);
        let k2 = f(a - 0.5 * h * k1.0, b - 0.5 * h * k1.1);
        let k3 = f(a - 0.5 * h * k2.0, b - 0.5 * h * k2.1);
        let k4 = f(a - h * k3.0, b - h * k3.1);
        a -= h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        b -= h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        coef[k] = (a, b);
    }
    let rate = |(a, b): (f64, f64), m: f64, v: f64| -> (f64, f64) {
        let w = b - lam * (a + b) / (1.0 + lam);
        (-(a + w) * m, -2.0 * a * v + 2.0)
    };
    let mid = |k: usize| {
        (
            0.5 * (coef[k].0 + coef[k + 1].0),
            0.5 * (coef[k].1 + coef[k + 1].1),
        )
    };
    let mut out = Vec::new();
    let (mut m, mut v) = (mean0, var0);
    let mut k = 0;
    for &t in times {
        let target = (t / h).round() as usize;
        while k < target {
            let k1 = rate(coef[k], m, v);
            let k2 = rate(mid(k), m + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
            let k3 = rate(mid(k), m + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
            let k4 = rate(coef[k + 1], m + h * k3.0, v + h * k3.1);
            m += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            k += 1;
        }
        out.push((m, v));
    }
    out
}

fn c11_picard() -> Outcome {
    let s = LqSpec {
        dim: 1,
        lambda: 0.3,
        c_x: 0.5,
        q_x: 0.5,
        c_g: 1.0,
        q_g: 0.5,
    };
    let model = lq_model(s, 0.0, 1.0).map_err(|e| e.to_string())?;
    let grid = PicardGrid {
        radius: 5.0,
        points: 201,
        dt: None,
    };
    let m0 = InitialDensity {
        mean: 0.5,
        std: 0.5,
    };
    let opts = PicardOptions {
        tol: 1e-5,
        ..PicardOptions::default()
    };
    let sol = solve_mfgc_picard(&model, &grid, &m0, &opts).map_err(|e| e.to_string())?;
    let oracle = moment_oracle(&s, 1.0, 0.5, 0.25, &sol.times);
    let worst = oracle
        .iter()
        .enumerate()
        .map(|(k, (m, v))| (sol.mean(k) - m).abs().max((sol.variance(k) - v).abs()))
        .fold(0.0, f64::max);
    let other_opts = PicardOptions {
        initial: InitialGuess {
            shift: 1.0,
            spread: 2.0,
            action: -0.5,
        },
        ..opts
    };
    let other = solve_mfgc_picard(&model, &grid, &m0, &other_opts).map_err(|e| e.to_string())?;
    let gap = flow_gap(&sol, &other).map_err(|e| e.to_string())?;
    Ok((
        worst < 1e-3 && gap < 5.0 * opts.tol,
        format!("max moment error {worst:.3e} (< 1e-3), multi-start W1 gap {gap:.3e} (< 5e-5)"),
    ))
}

fn c12_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_mfgc");
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0;
    for (name, workers) in [
        ("fixedpoint-decay", ["1", "2"]),
        ("monotonicity-audit", ["1", "3"]),
        ("monotonicity-audit-negative", ["2", "2"]),
        ("convergence", ["1", "1"]),
        ("master-residual", ["1", "2"]),
    ] {
        let mut outputs = Vec::new();
        for (run, w) in workers.iter().enumerate() {
            let out = dir.path().join(format!("{name}-{run}"));
            let status = Command::new(bin)
                .args(["run", "--config"])
                .arg(root.join(format!("{name}.toml")))
                .arg("--out")
                .arg(&out)
                .args(["--workers", w])
                .output()
                .map_err(|e| e.to_string())?;
            let code = status.status.code().unwrap_or(-1);
            if code == 1 {
                return Err(format!(
                    "{name}: {}",
                    String::from_utf8_lossy(&status.stderr)
                ));
            }
            let mut files: Vec<_> = std::fs::read_dir(&out)
                .map_err(|e| e.to_string())?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            files.sort();
            let contents = files
                .iter()
                .map(|f| Ok((f.file_name().unwrap().to_owned(), std::fs::read(f)?)))
                .collect::<Result<Vec<_>, std::io::Error>>()
                .map_err(|e| e.to_string())?;
            outputs.push((code, contents));
        }
        if outputs[0] != outputs[1] {
            return Ok((false, format!("{name}: outputs differ between runs")));
        }
        compared += outputs[0].1.len();
    }
    Ok((
        true,
        format!("{compared} output files byte-identical across reruns and worker counts"),
    ))
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        criterion(
            "C1",
            "fixed-point exactness (LQ)",
            secs(1),
            c1_fixed_point_exactness,
        ),
        criterion("C2", "Jacobian identity", secs(5), c2_jacobian_identity),
        criterion(
            "C3",
            "finite-difference agreement",
            secs(10),
            c3_finite_differences,
        ),
        criterion("C4", "decay scaling", secs(60), c4_decay_scaling),
        criterion(
            "C5",
            "discrete monotonicity",
            secs(30),
            c5_discrete_monotonicity,
        ),
        criterion("C6", "LL audit sign", secs(10), c6_ll_sign),
        criterion("C7", "Nash grid vs Riccati", secs(120), c7_nash_vs_riccati),
        criterion(
            "C8",
            "cross-derivative trend",
            secs(900),
            c8_cross_derivative_trend,
        ),
        criterion(
            "C9",
            "master residual and convergence",
            secs(120),
            c9_master_trend,
        ),
        criterion("C10", "SDE moments and norms", secs(60), c10_sde_moments),
        criterion("C11", "Picard solver", secs(120), c11_picard),
        criterion("C12", "determinism", secs(300), c12_determinism),
    ];
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if passed < results.len() && std::env::var("MFGC_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
