use mfgc::meanfield::{
    convergence_report, flow_gap, master_residual, picard_step_distance, quantile_cloud,
    residual_probes, solve_master_lq, solve_mfgc_picard, GridLift, InitialDensity, InitialGuess,
    MasterLift, MeanFieldError, PicardGrid, PicardOptions, ProbeSpec, RiccatiLift,
};
use mfgc::model::{lq_model, LqSpec, Model, StateCloud};
use mfgc::nash::{solve_nash_grid, solve_nash_riccati, Grid};

fn spec() -> LqSpec {
    LqSpec {
        lambda: 0.3,
        c_x: 0.5,
        q_x: 0.5,
        c_g: 1.0,
        q_g: 0.5,
        dim: 1,
    }
}

fn riccati_lift(model: &Model, n: usize) -> RiccatiLift {
    RiccatiLift::new(solve_nash_riccati(model, n).unwrap(), model.clone())
}

/// Backward RK4 for (alpha, beta) of the mean-field LQ solution, then forward
/// RK4 for the mean and variance of the equilibrium flow.
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
    let rate = |k: usize, m: f64, v: f64| -> (f64, f64) {
        let (a, b) = coef[k];
        let w = b - lam * (a + b) / (1.0 + lam);
        (-(a + w) * m, -2.0 * a * v + 2.0)
    };
    // Midpoint values use the average of neighbouring coefficients.
    let mid = |k: usize, m: f64, v: f64| -> (f64, f64) {
        let (a0, b0) = coef[k];
        let (a1, b1) = coef[k + 1];
        let (a, b) = (0.5 * (a0 + a1), 0.5 * (b0 + b1));
        let w = b - lam * (a + b) / (1.0 + lam);
        (-(a + w) * m, -2.0 * a * v + 2.0)
    };
    let mut out = Vec::new();
    let (mut m, mut v) = (mean0, var0);
    let mut k = 0;
    for &t in times {
        let target = (t / h).round() as usize;
        while k < target {
            let k1 = rate(k, m, v);
            let k2 = mid(k, m + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
            let k3 = mid(k, m + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
            let k4 = rate(k + 1, m + h * k3.0, v + h * k3.1);
            m += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            k += 1;
        }
        out.push((m, v));
    }
    out
}

#[test]
fn master_lq_matches_the_one_player_closed_form() {
    let s = LqSpec {
        c_g: 2.0,
        ..LqSpec::default()
    };
    for sigma0 in [0.0, 0.4] {
        let model = lq_model(s, sigma0, 1.5).unwrap();
        let master = solve_master_lq(&model).unwrap();
        let m = quantile_cloud(5, 1, 1.0);
        for t in [0.0, 0.3, 1.1, 1.5] {
            let tau: f64 = 1.5 - t;
            let alpha = 2.0 / (1.0 + 2.0 * tau);
            let rho = (1.0 + sigma0) * (1.0 + 2.0 * tau).ln();
            let x = 0.7;
            let exact = 0.5 * alpha * x * x + rho;
            let got = master.value(t, &[x], &m.view()).unwrap();
            assert!((got - exact).abs() < 1e-10, "t={t}: {got} vs {exact}");
        }
    }
}

#[test]
fn master_lq_solves_the_master_equation() {
    for sigma0 in [0.0, 0.5] {
        let mut s = spec();
        s.dim = 2;
        let model = lq_model(s, sigma0, 1.0).unwrap();
        let master = solve_master_lq(&model).unwrap();
        let probes = residual_probes(
            &master,
            &ProbeSpec {
                count: 100,
                scale: 1.0,
                seed: 5,
                cloud_size: 12,
            },
        );
        let rows = master_residual(&master, &probes).unwrap();
        let worst = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
        assert!(worst < 1e-8, "sigma0={sigma0}: worst residual {worst:e}");
    }
}

#[test]
fn master_lq_terminal_value_is_g() {
    let model = lq_model(spec(), 0.0, 1.0).unwrap();
    let master = solve_master_lq(&model).unwrap();
    let m = StateCloud::new(1, vec![-1.0, 0.5, 2.0]).unwrap();
    let x = [0.3];
    let g = model.terminal.value(&x, &m.view());
    assert!((master.value(1.0, &x, &m.view()).unwrap() - g).abs() < 1e-12);
}

#[test]
fn riccati_lift_scalings_match_difference_quotients() {
    let model = lq_model(spec(), 0.0, 1.0).unwrap();
    let lift = riccati_lift(&model, 4);
    let m = StateCloud::new(1, vec![-0.5, 0.2, 1.1]).unwrap();
    let (t, x) = (0.4, [0.3]);
    let eps = 1e-5;
    for j in 0..3 {
        let mut up = m.points().to_vec();
        let mut down = m.points().to_vec();
        up[j] += eps;
        down[j] -= eps;
        let fd = (lift
            .value(t, &x, &StateCloud::new(1, up).unwrap().view())
            .unwrap()
            - lift
                .value(t, &x, &StateCloud::new(1, down).unwrap().view())
                .unwrap())
            / (2.0 * eps);
        let dm = lift.d_m(t, &x, &m.view(), j).unwrap()[0] / 3.0;
        assert!((fd - dm).abs() < 1e-8, "atom {j}: {fd} vs {dm}");
    }
    assert!(matches!(
        lift.d_mm(t, &x, &m.view(), 1, 1),
        Err(MeanFieldError::CoincidentAtoms(1))
    ));
    let small = StateCloud::new(1, vec![0.0]).unwrap();
    assert!(matches!(
        lift.value(t, &x, &small.view()),
        Err(MeanFieldError::WrongCloudSize {
            expected: 3,
            got: 1
        })
    ));
}

#[test]
fn grid_lift_is_permutation_invariant_and_matches_terminal_cost() {
    let model = lq_model(spec(), 0.0, 0.5).unwrap();
    let grid = Grid::new(3.0, 13, 3, 1, 0.5, 0.0, None).unwrap();
    let field = solve_nash_grid(&model, &grid).unwrap();
    let lift = GridLift::new(&field);
    let a = StateCloud::new(1, vec![-1.0, 1.5]).unwrap();
    let b = StateCloud::new(1, vec![1.5, -1.0]).unwrap();
    let t_mid = field.time(field.slice_count() / 2);
    let x = [0.5];
    let va = lift.value(t_mid, &x, &a.view()).unwrap();
    let vb = lift.value(t_mid, &x, &b.view()).unwrap();
    assert!((va - vb).abs() < 1e-12);
    let g = model.terminal.value(&x, &a.view());
    assert!((lift.value(0.5, &x, &a.view()).unwrap() - g).abs() < 1e-12);
    assert!(matches!(
        lift.value(t_mid, &[0.1], &a.view()),
        Err(MeanFieldError::OutOfDomain(_))
    ));
}

#[test]
fn grid_lift_gradient_matches_riccati() {
    let model = lq_model(spec(), 0.0, 1.0).unwrap();
    let dt = 0.5 * Grid::max_stable_dt(4.0, 33, 2, 1, 0.0);
    let grid = Grid::new(4.0, 33, 2, 1, 1.0, 0.0, Some(dt)).unwrap();
    let field = solve_nash_grid(&model, &grid).unwrap();
    let lift = GridLift::new(&field);
    let exact = riccati_lift(&model, 2);
    let probes = residual_probes(
        &lift,
        &ProbeSpec {
            count: 20,
            ..ProbeSpec::default()
        },
    );
    for p in &probes {
        let g = lift.d_x(p.t, &p.x, &p.cloud.view()).unwrap()[0];
        let e = exact.d_x(p.t, &p.x, &p.cloud.view()).unwrap()[0];
        assert!((g - e).abs() < 5e-3, "{g} vs {e} at t={}", p.t);
    }
}

#[test]
fn common_noise_enters_only_through_its_own_term() {
    let with = lq_model(spec(), 0.5, 1.0).unwrap();
    let lift = riccati_lift(&with, 3);
    let probes = residual_probes(
        &lift,
        &ProbeSpec {
            count: 10,
            ..ProbeSpec::default()
        },
    );
    let rows = master_residual(&lift, &probes).unwrap();
    for r in &rows {
        let t = r.terms;
        let without = t.time + t.idiosyncratic + t.hamiltonian + t.transport;
        assert!((r.residual - (without + t.common).abs()).abs() < 1e-12);
        assert!(t.common != 0.0);
    }
}

#[test]
fn riccati_convergence_to_the_master_field() {
    let model = lq_model(spec(), 0.0, 1.0).unwrap();
    let master = solve_master_lq(&model).unwrap();
    let lifts: Vec<RiccatiLift> = [2, 4, 8, 16]
        .iter()
        .map(|&n| riccati_lift(&model, n))
        .collect();
    let refs: Vec<&dyn MasterLift> = lifts.iter().map(|l| l as &dyn MasterLift).collect();
    let probes = mfgc::meanfield::ConvergenceProbes {
        times: vec![0.0, 0.5],
        points: vec![vec![-1.0], vec![0.0], vec![1.0]],
        scale: 1.0,
    };
    let rows = convergence_report(&refs, &master, &probes).unwrap();
    let errs: Vec<f64> = rows.iter().map(|r| r.error).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

#[test]
fn picard_reproduces_lq_moments() {
    let s = spec();
    let model = lq_model(s, 0.0, 1.0).unwrap();
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
    let sol = solve_mfgc_picard(&model, &grid, &m0, &opts).unwrap();
    let oracle = moment_oracle(&s, 1.0, 0.5, 0.25, &sol.times);
    let mut worst: f64 = 0.0;
    for (k, (m, v)) in oracle.iter().enumerate() {
        worst = worst
            .max((sol.mean(k) - m).abs())
            .max((sol.variance(k) - v).abs());
        assert!((sol.mass(k) - 1.0).abs() < 1e-6);
        assert!(sol.density[k].iter().all(|&d| d >= 0.0));
    }
    println!("iterations {} worst moment error {worst:e}", sol.iterations);
    assert!(worst < 1e-3, "worst moment error {worst:e}");
    let extra = picard_step_distance(&model, &grid, &m0, &opts, &sol).unwrap();
    assert!(extra < opts.tol);

    let other = solve_mfgc_picard(
        &model,
        &grid,
        &m0,
        &PicardOptions {
            initial: InitialGuess {
                shift: 1.0,
                spread: 2.0,
                action: -0.5,
            },
            ..opts
        },
    )
    .unwrap();
    assert!(flow_gap(&sol, &other).unwrap() < 5.0 * opts.tol);
}

#[test]
fn picard_rejects_common_noise() {
    let model = lq_model(spec(), 0.2, 1.0).unwrap();
    let grid = PicardGrid {
        radius: 4.0,
        points: 81,
        dt: None,
    };
    let m0 = InitialDensity {
        mean: 0.0,
        std: 1.0,
    };
    assert!(matches!(
        solve_mfgc_picard(&model, &grid, &m0, &PicardOptions::default()),
        Err(MeanFieldError::InvalidInput(_))
    ));
}
