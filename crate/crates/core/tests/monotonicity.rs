use mfgc::meanfield::{solve_master_lq, GridLift, MasterLift, RiccatiLift};
use mfgc::model::{lq_model, nonlinear_model, LqSpec, Model, MonotonicityConstants};
use mfgc::monotonicity::{
    audit_discrete_m, audit_disp_g, audit_disp_l, audit_ll, audit_ll_propagation, compute_c_disp,
    fit_constants, fit_disp_g, fit_disp_l, remark_equivalence, AuditKind, LlTarget,
    MonotonicityError, PropagationOptions, Sampling,
};
use mfgc::nash::{solve_nash_grid, solve_nash_riccati, Grid};
use mfgc::par;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn lq(lambda: f64, c_x: f64, q_x: f64, c_g: f64, q_g: f64) -> Model {
    let spec = LqSpec {
        dim: 1,
        lambda,
        c_x,
        q_x,
        c_g,
        q_g,
    };
    lq_model(spec, 0.0, 1.0).unwrap()
}

fn sampling(samples: usize, cloud_size: usize) -> Sampling {
    Sampling {
        samples,
        cloud_size,
        seed: 11,
        scale: 1.0,
    }
}

/// Redraws the audit's clouds for sample `k`: `X, α, X', α'` in that order.
fn redraw(s: &Sampling, k: usize, blocks: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    rng.set_stream(k as u64);
    (0..blocks)
        .map(|_| {
            (0..s.cloud_size)
                .map(|_| s.scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_sq_gap(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / u.len() as f64
}

#[test]
fn discrete_m_without_coupling_is_the_identity() {
    let r = audit_discrete_m(&lq(0.0, 0.5, 0.5, 1.0, 0.0), 5, &sampling(20, 0)).unwrap();
    assert_eq!(r.kind, AuditKind::DiscreteM);
    assert!(r.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    assert!(r.pass);
}

#[test]
fn discrete_m_matches_the_eigenvalues_of_a_i_plus_b_j() {
    // M = (1 - b) I + b J with b = λ/(N-1); eigenvalues 1 - b and 1 - b + N b.
    let (lambda, n) = (0.5, 3usize);
    let b = lambda / (n - 1) as f64;
    let expected = (1.0 - b).min(1.0 - b + n as f64 * b);
    let r = audit_discrete_m(&lq(lambda, 0.5, 0.5, 1.0, 0.0), n, &sampling(10, 0)).unwrap();
    assert!(r.values.iter().all(|v| (v - expected).abs() < 1e-12));
    assert!((r.worst_value - 0.75).abs() < 1e-12);
}

#[test]
fn discrete_m_is_positive_for_the_perturbed_family() {
    let spec = LqSpec {
        dim: 1,
        lambda: 0.5,
        c_x: 0.5,
        q_x: 0.5,
        c_g: 1.0,
        q_g: 0.0,
    };
    let model = nonlinear_model(0.1, spec, 0.0, 1.0).unwrap();
    let r = audit_discrete_m(&model, 16, &sampling(100, 0)).unwrap();
    assert!(r.pass, "worst {}", r.worst_value);
    assert_eq!(r.witnesses.len(), 5);
}

#[test]
fn discrete_m_detects_coupling_beyond_the_margin() {
    let r = audit_discrete_m(&lq(-1.2, 0.0, 0.0, 0.0, 0.0), 4, &sampling(10, 0)).unwrap();
    assert!(!r.pass);
    assert!((r.worst_value + 0.2).abs() < 1e-12);
}

#[test]
fn disp_l_is_tight_without_coupling() {
    let model = lq(0.0, 0.0, 0.0, 1.0, 0.0);
    let c = model.constants.unwrap();
    assert_eq!((c.c_la, c.c_lx), (1.0, 0.0));
    let r = audit_disp_l(&model, &sampling(50, 8)).unwrap();
    assert!(r.values.iter().all(|v| v.abs() < 1e-12));
    assert!(r.pass);
}

#[test]
fn disp_l_matches_the_lq_expansion() {
    let (lambda, c_x, q_x) = (0.5, 0.5, 1.5);
    let model = lq(lambda, c_x, q_x, 1.0, 0.0);
    let c = model.constants.unwrap();
    assert!((c.c_la - 0.5).abs() < 1e-15 && (c.c_lx - 0.25).abs() < 1e-15);
    let s = sampling(200, 8);
    let r = audit_disp_l(&model, &s).unwrap();
    assert!(r.pass, "worst {}", r.worst_value);
    for k in [0, 17, 199] {
        let v = redraw(&s, k, 4);
        let (x, a, xp, ap) = (&v[0], &v[1], &v[2], &v[3]);
        let (a2, x2) = (mean_sq_gap(a, ap), mean_sq_gap(x, xp));
        let (da, dx) = (mean(a) - mean(ap), mean(x) - mean(xp));
        let lhs = a2 + lambda * da * da + c_x * (x2 - q_x * dx * dx);
        let slack = (lhs - c.c_la * a2 + c.c_lx * x2) / (a2 + x2);
        assert!((r.values[k] - slack).abs() < 1e-12);
    }
}

#[test]
fn fitted_disp_l_constant_for_the_perturbed_family() {
    let spec = LqSpec {
        dim: 1,
        lambda: 0.5,
        c_x: 0.5,
        q_x: 0.5,
        c_g: 1.0,
        q_g: 0.0,
    };
    let model = nonlinear_model(0.05, spec, 0.0, 1.0).unwrap();
    let r = audit_disp_l(&model, &sampling(200, 8)).unwrap();
    assert!(r.fitted);
    assert!(r.worst_value >= 0.4, "fitted C_La {}", r.worst_value);
    assert_eq!(r.constants.unwrap().c_la, r.worst_value);
}

#[test]
fn disp_g_trivial_and_fitted_cases() {
    let s = sampling(100, 8);
    let zero = fit_disp_g(&lq(0.5, 0.5, 0.5, 0.0, 0.0), &s).unwrap();
    assert!(zero.values.iter().all(|v| *v == 0.0));
    assert_eq!(zero.constants.unwrap().c_g, 0.0);

    let convex = fit_disp_g(&lq(0.5, 0.5, 0.5, 1.0, 0.0), &s).unwrap();
    assert!(convex.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    assert_eq!(convex.constants.unwrap().c_g, 0.0);

    let (c_g, q_g) = (1.0, 2.0);
    let model = lq(0.5, 0.5, 0.5, c_g, q_g);
    let fitted = fit_disp_g(&model, &s).unwrap();
    let mut oracle = f64::INFINITY;
    for k in 0..s.samples {
        let v = redraw(&s, k, 2);
        let dx = mean(&v[0]) - mean(&v[1]);
        oracle = oracle.min(c_g * (1.0 - q_g * dx * dx / mean_sq_gap(&v[0], &v[1])));
    }
    let c_fit = fitted.constants.unwrap().c_g;
    assert!((c_fit - (-oracle).max(0.0)).abs() < 1e-12);
    assert!(c_fit > 0.0 && c_fit <= model.constants.unwrap().c_g);
    assert!(audit_disp_g(&model, &s).unwrap().pass);
}

#[test]
fn ll_audit_follows_the_sign_of_lambda() {
    let s = sampling(100, 8);
    for lambda in [0.5, -0.5] {
        let r = audit_ll(&lq(lambda, 0.5, 0.0, 1.0, 0.0), LlTarget::Lagrangian, &s).unwrap();
        for k in 0..s.samples {
            let v = redraw(&s, k, 4);
            let gap = mean(&v[1]) - mean(&v[3]);
            assert!((r.values[k] - lambda * gap * gap).abs() < 1e-12);
        }
        assert_eq!(r.pass, lambda > 0.0);
        if lambda < 0.0 {
            assert!(r.witnesses[0].value < 0.0);
            assert_eq!(r.witnesses[0].value, r.worst_value);
        }
    }
    let separable = audit_ll(&lq(0.0, 0.5, 0.0, 1.0, 0.0), LlTarget::Lagrangian, &s).unwrap();
    assert!(separable.values.iter().all(|v| v.abs() < 1e-12));
    assert!(separable.pass);
}

#[test]
fn ll_terminal_matches_the_lq_expansion() {
    let s = sampling(50, 8);
    for q_g in [-0.5, 0.5] {
        let r = audit_ll(&lq(0.5, 0.5, 0.0, 1.0, q_g), LlTarget::Terminal, &s).unwrap();
        assert_eq!(r.kind, AuditKind::LlG);
        for k in 0..s.samples {
            let v = redraw(&s, k, 2);
            let gap = mean(&v[0]) - mean(&v[1]);
            assert!((r.values[k] + q_g * gap * gap).abs() < 1e-12);
        }
        assert_eq!(r.pass, q_g < 0.0);
    }
}

#[test]
fn c_disp_arithmetic() {
    let spec = LqSpec {
        dim: 1,
        lambda: 0.5,
        c_x: 0.5,
        q_x: 0.5,
        c_g: 1.0,
        q_g: 0.0,
    };
    let model = nonlinear_model(0.1, spec, 0.0, 1.0).unwrap();
    assert!(matches!(
        compute_c_disp(&model, None),
        Err(MonotonicityError::MissingConstants(_))
    ));
    let one = MonotonicityConstants {
        c_la: 1.0,
        c_lx: 0.0,
        c_g: 0.0,
    };
    let r = compute_c_disp(&model, Some(one)).unwrap();
    assert_eq!(r.worst_value, 1.0);
    assert!(r.pass && r.fitted);
    let c = MonotonicityConstants {
        c_la: 0.5,
        c_lx: 0.2,
        c_g: 0.1,
    };
    assert!((compute_c_disp(&model, Some(c)).unwrap().worst_value - 0.3).abs() < 1e-15);

    let declared = lq(0.5, 0.5, 1.5, 1.0, 1.2);
    let r = compute_c_disp(&declared, Some(one)).unwrap();
    assert!(!r.fitted);
    assert!((r.worst_value - (0.5 - 0.2 - 0.125)).abs() < 1e-15);
}

#[test]
fn fitted_constants_feed_c_disp() {
    let spec = LqSpec {
        dim: 1,
        lambda: 0.5,
        c_x: 0.5,
        q_x: 0.5,
        c_g: 1.0,
        q_g: 0.0,
    };
    let model = nonlinear_model(0.1, spec, 0.0, 1.0).unwrap();
    let c = fit_constants(&model, &sampling(100, 8)).unwrap();
    assert!(c.c_la > 0.0 && c.c_g == 0.0 && c.c_lx == 0.0);
    let r = compute_c_disp(&model, Some(c)).unwrap();
    assert!(r.pass && (r.worst_value - c.c_la).abs() < 1e-15);
}

#[test]
fn first_and_second_order_forms_agree() {
    let s = sampling(20, 6);
    let check = remark_equivalence(&lq(0.5, 0.5, 1.5, 1.0, 0.0), &s).unwrap();
    assert!(check.compared > 0 && check.pass());
    assert!(check.max_gap < 1e-10, "gap {}", check.max_gap);

    let spec = LqSpec {
        dim: 2,
        lambda: -0.4,
        c_x: 0.5,
        q_x: 0.5,
        c_g: 1.0,
        q_g: 0.0,
    };
    let tanh = nonlinear_model(0.1, spec, 0.0, 1.0).unwrap();
    let check = remark_equivalence(&tanh, &s).unwrap();
    assert!(check.compared > 0 && check.pass());
    assert!(check.max_gap < 1e-9, "gap {}", check.max_gap);
}

#[test]
fn ll_monotone_models_pass_the_fitted_displacement_audit() {
    let s = sampling(100, 8);
    let spec = LqSpec {
        dim: 1,
        lambda: 0.5,
        c_x: 0.5,
        q_x: 0.0,
        c_g: 1.0,
        q_g: 0.0,
    };
    let models = [
        lq_model(spec, 0.0, 1.0).unwrap(),
        nonlinear_model(0.05, spec, 0.0, 1.0).unwrap(),
    ];
    for model in &models {
        let ll = audit_ll(model, LlTarget::Lagrangian, &s).unwrap();
        if ll.pass {
            let fit = fit_disp_l(model, &s).unwrap();
            assert!(
                fit.pass && fit.worst_value > 0.0,
                "{}: {}",
                model.name,
                fit.worst_value
            );
        }
    }
    assert!(audit_ll(&models[0], LlTarget::Lagrangian, &s).unwrap().pass);
}

#[test]
fn audits_are_deterministic_across_worker_counts() {
    let model = lq(0.3, 0.5, 1.5, 1.0, 2.0);
    let s = sampling(40, 8);
    let run = || {
        (
            audit_disp_l(&model, &s).unwrap().values,
            audit_ll(&model, LlTarget::Lagrangian, &s).unwrap().values,
            audit_discrete_m(&model, 6, &s).unwrap().values,
        )
    };
    let a = par::with_workers(1, run);
    let b = par::with_workers(3, run);
    assert_eq!(a, b);
}

fn propagation(samples: usize, tolerance: f64, times: Option<Vec<f64>>) -> PropagationOptions {
    PropagationOptions {
        sampling: Sampling {
            samples,
            cloud_size: 6,
            seed: 5,
            scale: 0.7,
        },
        times,
        tolerance,
    }
}

#[test]
fn master_lq_propagation_follows_the_cross_coefficient() {
    for lambda in [0.5, -0.5] {
        let model = lq(lambda, 0.5, 0.0, 1.0, 0.0);
        let master = solve_master_lq(&model).unwrap();
        let opts = propagation(30, 1e-8, None);
        let out = audit_ll_propagation(&master, &opts).unwrap();
        assert_eq!(out.slices.len(), 11);
        // ∫[U(t,·,m) − U(t,·,m')] d(m − m') = β(t) |x̄ − x̄'|² for the quadratic ansatz.
        let mut min_gap = f64::INFINITY;
        let mut max_gap: f64 = 0.0;
        for k in 0..opts.sampling.samples {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.sampling.seed);
            rng.set_stream(k as u64);
            let draws: Vec<f64> = (0..12)
                .map(|_| 0.7 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let g = mean(&draws[..6]) - mean(&draws[6..]);
            min_gap = min_gap.min(g * g);
            max_gap = max_gap.max(g * g);
        }
        for slice in &out.slices {
            let beta = master.coefficients(slice.t)[1];
            let oracle = if beta >= 0.0 {
                beta * min_gap
            } else {
                beta * max_gap
            };
            assert!((slice.worst - oracle).abs() < 1e-10);
            assert!((slice.max_uxx - master.coefficients(slice.t)[0]).abs() < 1e-12);
        }
        let last = out.slices.last().unwrap();
        assert!(last.worst.abs() < 1e-8);
        assert_eq!(out.report.pass, lambda > 0.0);
    }
}

#[test]
fn riccati_lift_propagation_flags_negative_coupling() {
    let model = lq(-0.5, 0.5, 0.0, 1.0, 0.0);
    let lift = RiccatiLift::new(solve_nash_riccati(&model, 3).unwrap(), model.clone());
    let out = audit_ll_propagation(&lift, &propagation(30, 1e-8, None)).unwrap();
    assert!(!out.report.pass);
    assert!(out.slices.last().unwrap().worst.abs() < 1e-8);
    assert!(out.slices[0].worst < 0.0);
}

#[test]
fn grid_lift_propagation_stays_within_the_discretization_tolerance() {
    let model = lq(0.5, 0.5, 0.0, 1.0, 0.0);
    let dt = 0.5 * Grid::max_stable_dt(4.0, 33, 2, 1, 0.0);
    let grid = Grid::new(4.0, 33, 2, 1, 1.0, 0.0, Some(dt)).unwrap();
    let field = solve_nash_grid(&model, &grid).unwrap();
    let lift = GridLift::new(&field);
    let nodes = MasterLift::time_nodes(&lift).unwrap();
    let times: Vec<f64> = (0..=5).map(|k| k as f64 / 5.0).collect();
    let out = audit_ll_propagation(&lift, &propagation(40, 2e-2, Some(times))).unwrap();
    assert_eq!(out.slices.len(), 6);
    assert!(out.slices.iter().all(|s| nodes.contains(&s.t)));
    assert!(out.report.pass, "worst {}", out.report.worst_value);
    assert!(out.slices.last().unwrap().worst.abs() < 1e-8);
    assert!(out.uxx_bound.is_finite() && out.uxx_bound > 0.0);
}
