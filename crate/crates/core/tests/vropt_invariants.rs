mod common;

use common::*;
use cvtrack::dataio::{synth_problem, SynthKind};
use cvtrack::glm::{GlmObjective, LinkKind};
use cvtrack::hessmodels::{measure_eta, BasisSource};
use cvtrack::vropt::{
    control_variate, control_variate_mean, epoch_contraction_check, inner_step, make_snapshot, one_epoch_ratio,
    reference_solution, run, step_direction, MethodPlan, Projection, Regime, RunConfig, RunError, Snapshot,
    SnapshotContext, SnapshotModel, SnapshotRule, METHOD_NAMES,
};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

fn snapshot_for(plan: &MethodPlan, obj: &GlmObjective, theta_bar: &DVector<f64>, seed: u64) -> Snapshot {
    let prev = theta_bar - DVector::from_fn(obj.d(), |j, _| 0.2 + 0.05 * j as f64);
    let dirs = cvtrack::hessmodels::gaussian_basis(obj.d(), plan.rank.min(obj.d()), seed + 77).unwrap();
    let ctx = SnapshotContext {
        prev_theta_bar: Some(prev),
        prev_directions: Some(cvtrack::hessmodels::EmbeddingBasis { s: dirs.s, source: BasisSource::PrevDirections }),
        basis_seed: seed,
        rel_tol: 1e-10,
    };
    make_snapshot(plan, obj, theta_bar, &ctx).unwrap()
}

fn plans(d: usize) -> Vec<MethodPlan> {
    METHOD_NAMES.iter().map(|m| MethodPlan::parse(m).unwrap().with_rank(3.min(d))).collect()
}

#[test]
fn direction_is_unbiased_for_every_family() {
    for seed in 0..10u64 {
        let link = if seed % 2 == 0 { LinkKind::Logistic } else { LinkKind::Squared };
        let (n, d) = (10 + 4 * seed as usize, 3 + seed as usize % 6);
        let obj = random_objective(seed, n, d, link, 0.05);
        let mut r = rng(seed + 500);
        let theta_bar = gaussian_vector(&mut r, d) * 0.5;
        let theta = &theta_bar + gaussian_vector(&mut r, d) * 0.3;
        let full = obj.grad_full(&theta).unwrap();
        for plan in plans(d) {
            let snap = snapshot_for(&plan, &obj, &theta_bar, seed);
            let mut mean = DVector::zeros(d);
            let mut cv_mean = DVector::zeros(d);
            for i in 0..n {
                mean += step_direction(&obj, &snap, i, &theta).unwrap() / n as f64;
                cv_mean += control_variate(&obj, &snap, i, &theta).unwrap() / n as f64;
            }
            assert!(rel_err(&mean, &full) <= 1e-10, "{} seed {seed}: {:e}", plan.name(), rel_err(&mean, &full));
            let exact = control_variate_mean(&obj, &snap, &theta).unwrap();
            assert!(rel_err(&cv_mean, &exact) <= 1e-10, "{}", plan.name());
        }
    }
}

#[test]
fn zero_displacement_cancels() {
    let obj = random_objective(1, 12, 4, LinkKind::Logistic, 0.1);
    let theta_bar = gaussian_vector(&mut rng(1), 4);
    for plan in plans(4) {
        let snap = snapshot_for(&plan, &obj, &theta_bar, 3);
        for i in 0..obj.n() {
            let z = control_variate(&obj, &snap, i, &theta_bar).unwrap();
            assert!(rel_err(&z, &obj.grad_sample(i, &theta_bar).unwrap()) < 1e-14);
            let next = inner_step(&obj, &snap, &theta_bar, i, 0.1, None).unwrap();
            assert!(rel_err(&next, &(&theta_bar - &snap.g_bar * 0.1)) < 1e-14);
        }
        assert!(rel_err(&control_variate_mean(&obj, &snap, &theta_bar).unwrap(), &snap.g_bar) < 1e-15);
    }
}

#[test]
fn svrg_control_variate_is_constant() {
    let obj = random_objective(2, 10, 3, LinkKind::Logistic, 0.1);
    let theta_bar = gaussian_vector(&mut rng(2), 3);
    let snap = snapshot_for(&MethodPlan::parse("svrg").unwrap(), &obj, &theta_bar, 0);
    let theta = &theta_bar * 3.0;
    for i in 0..obj.n() {
        assert_eq!(control_variate(&obj, &snap, i, &theta).unwrap(), obj.grad_sample(i, &theta_bar).unwrap());
    }
}

#[test]
fn svrg2_on_ridge_is_batch_gradient_descent() {
    let obj = random_objective(3, 25, 5, LinkKind::Squared, 0.1);
    let plan = MethodPlan::parse("svrg2").unwrap();
    let mut r = rng(3);
    let theta_bar = gaussian_vector(&mut r, 5);
    let snap = snapshot_for(&plan, &obj, &theta_bar, 0);
    let mut theta = theta_bar.clone();
    for t in 0..200 {
        let next = inner_step(&obj, &snap, &theta, t % obj.n(), 0.05, None).unwrap();
        let gd = &theta - obj.grad_full(&theta).unwrap() * 0.05;
        assert!((&next - &gd).amax() <= 1e-12);
        theta = next;
    }
}

#[test]
fn variance_ordering_on_ridge() {
    let obj = random_objective(4, 40, 6, LinkKind::Squared, 0.05);
    // Same data without the regularizer: applying a snapshot model through it
    // gives the data part of each approximation.
    let data_only = obj.with_lambda(0.0).unwrap();
    let r_sq = cvtrack::dataio::dataset_stats(obj.data(), 0.0).radius_sq;
    let mut r = rng(4);
    let theta_bar = gaussian_vector(&mut r, 6);
    let delta = gaussian_vector(&mut r, 6) * 0.5;
    let theta = &theta_bar + &delta;
    let h_data = data_only.hess_dense_full(&theta_bar).unwrap();
    let curvature = delta.dot(&(&h_data * &delta));
    let variance = |snap: &Snapshot| {
        let dirs: Vec<_> = (0..obj.n()).map(|i| step_direction(&obj, snap, i, &theta).unwrap()).collect();
        let mean = dirs.iter().fold(DVector::zeros(6), |a, v| a + v) / obj.n() as f64;
        dirs.iter().map(|v| (v - &mean).norm_squared()).sum::<f64>() / obj.n() as f64
    };
    let v_svrg = variance(&snapshot_for(&MethodPlan::parse("svrg").unwrap(), &obj, &theta_bar, 9));
    assert!(v_svrg <= r_sq * curvature * (1.0 + 1e-10));
    let v_svrg2 = variance(&snapshot_for(&MethodPlan::parse("svrg2").unwrap(), &obj, &theta_bar, 9));
    assert!(v_svrg2 <= 1e-20 * v_svrg.max(1.0));
    for name in ["2d", "cmgauss", "amgauss"] {
        let plan = MethodPlan::parse(name).unwrap().with_rank(3);
        let snap = snapshot_for(&plan, &obj, &theta_bar, 9);
        let approx: Vec<DMatrix<f64>> = (0..obj.n())
            .map(|i| {
                let g = data_only.grad_sample(i, &theta_bar).unwrap();
                let mut m = DMatrix::zeros(6, 6);
                for j in 0..6 {
                    let mut e = DVector::zeros(6);
                    e[j] = 1.0;
                    let z = control_variate(&data_only, &snap, i, &(&theta_bar + &e)).unwrap();
                    m.set_column(j, &(z - &g));
                }
                m
            })
            .collect();
        let eta = measure_eta(&obj, &theta_bar, &approx).unwrap();
        let v = variance(&snap);
        assert!(v <= r_sq * eta * curvature * (1.0 + 1e-10), "{name}: var {v:e}, eta {eta}");
        assert!(eta < 1.0, "{name}: eta {eta}");
    }
}

#[test]
fn snapshot_charges_and_fallbacks() {
    let obj = random_objective(5, 30, 12, LinkKind::Logistic, 0.01);
    let theta = DVector::zeros(12);
    let svrg = make_snapshot(&MethodPlan::parse("svrg").unwrap(), &obj, &theta, &SnapshotContext::default()).unwrap();
    assert!(matches!(svrg.model, SnapshotModel::None));
    assert_eq!(svrg.datapasses, 1.0);
    let cm = make_snapshot(&MethodPlan::parse("cmgauss").unwrap(), &obj, &theta, &SnapshotContext::default()).unwrap();
    assert_eq!(cm.datapasses, 11.0);
    let sec = make_snapshot(&MethodPlan::parse("2dsec").unwrap(), &obj, &theta, &SnapshotContext::default()).unwrap();
    assert_eq!(sec.model.kind(), "diag");
    assert!(sec.fallback.is_some());
    let prev = make_snapshot(&MethodPlan::parse("amprev").unwrap(), &obj, &theta, &SnapshotContext::default()).unwrap();
    assert_eq!(prev.model.kind(), "low_rank");
    assert!(prev.fallback.is_some());
    let g = obj.grad_full(&theta).unwrap();
    assert!(rel_err(&cm.g_bar, &g) < 1e-12);
}

#[test]
fn epoch_accounting() {
    let obj = random_objective(6, 40, 12, LinkKind::Logistic, 0.01);
    let theta0 = DVector::zeros(12);
    let (t, k) = (25, 4);
    for (name, snap, step) in [("svrg", 1.0, 2.0), ("svrg2", 2.0, 3.0), ("2d", 2.0, 3.0), ("cmgauss", 11.0, 3.0), ("amgauss", 11.0, 4.0)] {
        let plan = MethodPlan::parse(name).unwrap();
        let out = run(&plan, &obj, &RunConfig::new(0.05, t, k, 1), &theta0, 0.0).unwrap();
        let expected = k as f64 * (snap + step * t as f64 / obj.n() as f64);
        assert!((out.trace.last().unwrap().datapasses - expected).abs() < 1e-9, "{name}");
        let passes: Vec<f64> = out.trace.records.iter().map(|r| r.datapasses).collect();
        assert!(passes.windows(2).all(|w| w[1] > w[0]));
    }
    // The secant epoch 0 is charged as the diagonal fallback.
    let out = run(&MethodPlan::parse("2dsec").unwrap(), &obj, &RunConfig::new(0.05, t, k, 1), &theta0, 0.0).unwrap();
    let expected = (2.0 + 3.0 * t as f64 / 40.0) + (k - 1) as f64 * (2.0 + 4.0 * t as f64 / 40.0);
    assert!((out.trace.last().unwrap().datapasses - expected).abs() < 1e-9);
    assert_eq!(out.fallbacks.len(), 1);
}

#[test]
fn runs_are_deterministic_and_zero_step_is_stationary() {
    let obj = random_objective(7, 30, 5, LinkKind::Logistic, 0.05).with_deterministic(true);
    let theta0 = DVector::zeros(5);
    for name in METHOD_NAMES {
        let plan = MethodPlan::parse(name).unwrap().with_rank(3);
        let cfg = RunConfig::new(0.1, 30, 5, 42);
        let a = run(&plan, &obj, &cfg, &theta0, 0.0).unwrap();
        let b = run(&plan, &obj, &cfg, &theta0, 0.0).unwrap();
        let strip = |o: &cvtrack::vropt::RunOutput| o.trace.records.iter().map(|r| (r.epoch, r.datapasses, r.fval, r.subopt)).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b), "{name}");
        assert_eq!(a.theta, b.theta);
        let still = run(&plan, &obj, &RunConfig::new(0.0, 30, 3, 42), &theta0, 0.0).unwrap();
        assert!(still.trace.records.iter().all(|r| r.fval == still.trace.records[0].fval));
    }
}

#[test]
fn svrg2_ridge_run_tracks_gradient_descent() {
    let ds = synth_problem(SynthKind::Ridge, 200, 8, 10.0, 1).unwrap();
    let obj = GlmObjective::new(Arc::new(ds), LinkKind::Squared, 1e-3).unwrap();
    let sm = obj.smoothness_constants(&DVector::zeros(8)).unwrap();
    let refsol = reference_solution(&obj, 1e-12, 1e5).unwrap();
    let gamma = 1.0 / sm.l;
    let (t, k) = (100, 20);
    let out = run(&MethodPlan::parse("svrg2").unwrap(), &obj, &RunConfig::new(gamma, t, k, 5), &DVector::zeros(8), refsol.f_star).unwrap();
    let mut gd = DVector::zeros(8);
    for _ in 0..t * k {
        gd -= obj.grad_full(&gd).unwrap() * gamma;
    }
    assert!((&out.theta - &gd).amax() < 1e-9);
    assert!(out.trace.final_subopt() < 1e-10);
}

#[test]
fn linear_convergence_on_strongly_convex_problem() {
    let ds = synth_problem(SynthKind::Logistic, 500, 10, 5.0, 2).unwrap();
    let obj = GlmObjective::new(Arc::new(ds), LinkKind::Logistic, 1e-2).unwrap();
    let refsol = reference_solution(&obj, 1e-10, 1e5).unwrap();
    let lmax = cvtrack::dataio::dataset_stats(obj.data(), obj.lambda()).l_max;
    let cfg = RunConfig::new(0.25 / lmax, obj.n(), 10, 3);
    let out = run(&MethodPlan::parse("svrg").unwrap(), &obj, &cfg, &DVector::zeros(10), refsol.f_star).unwrap();
    let logs: Vec<f64> = out.trace.records.iter().map(|r| r.subopt.log10()).collect();
    let n = logs.len() as f64;
    let xbar = (n - 1.0) / 2.0;
    let ybar = logs.iter().sum::<f64>() / n;
    let slope = logs.iter().enumerate().map(|(x, y)| (x as f64 - xbar) * (y - ybar)).sum::<f64>()
        / logs.iter().enumerate().map(|(x, _)| (x as f64 - xbar).powi(2)).sum::<f64>();
    assert!(slope < -0.1, "slope {slope}");
}

#[test]
fn divergence_returns_partial_trace() {
    let ds = synth_problem(SynthKind::Ridge, 100, 5, 100.0, 4).unwrap();
    let obj = GlmObjective::new(Arc::new(ds), LinkKind::Squared, 1e-3).unwrap();
    let lmax = cvtrack::dataio::dataset_stats(obj.data(), obj.lambda()).l_max;
    let cfg = RunConfig::new(1024.0 / lmax, 100, 10, 1);
    match run(&MethodPlan::parse("svrg").unwrap(), &obj, &cfg, &DVector::zeros(5), 0.0) {
        Err(RunError::Diverged { partial, .. }) => assert!(!partial.trace.is_empty()),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn projection_keeps_iterates_in_the_ball() {
    let obj = random_objective(8, 20, 4, LinkKind::Squared, 0.1);
    let center = DVector::from_element(4, 0.5);
    let proj = Projection::new(&center, 0.25).unwrap();
    let snap = snapshot_for(&MethodPlan::parse("svrg").unwrap(), &obj, &DVector::zeros(4), 0);
    let far = DVector::from_element(4, 10.0);
    let next = inner_step(&obj, &snap, &far, 0, 0.01, Some(&proj)).unwrap();
    assert!(((&next - &center).norm() - 0.25).abs() < 1e-12);
}

#[test]
fn contraction_ratio_at_optimum_is_zero() {
    let ds = synth_problem(SynthKind::Ridge, 100, 5, 10.0, 1).unwrap();
    let obj = GlmObjective::new(Arc::new(ds), LinkKind::Squared, 1e-2).unwrap();
    let refsol = reference_solution(&obj, 1e-12, 1e5).unwrap();
    let mut cfg = RunConfig::new(0.01, 10, 1, 0);
    cfg.snapshot_rule = SnapshotRule::EpochAverage;
    let r = one_epoch_ratio(&MethodPlan::parse("svrg2").unwrap(), &obj, &cfg, &refsol.theta(), refsol.f_star).unwrap();
    assert_eq!(r, 0.0);
}

#[test]
fn svrg2_proposition_contracts_on_ridge() {
    let ds = synth_problem(SynthKind::Ridge, 300, 6, 5.0, 7).unwrap();
    let obj = GlmObjective::new(Arc::new(ds), LinkKind::Squared, 1e-2).unwrap();
    let refsol = reference_solution(&obj, 1e-12, 1e5).unwrap();
    let rep = epoch_contraction_check(&obj, Regime::Svrg2Prop, 5, &refsol).unwrap();
    assert!(rep.assumptions_checked);
    assert!(rep.mean_ratio <= 0.8, "{rep:?}");
}

#[test]
fn reference_solution_stops_at_tolerance() {
    let obj = random_objective(9, 60, 8, LinkKind::Logistic, 1e-3);
    let sol = reference_solution(&obj, 1e-10, 1e6).unwrap();
    assert!(obj.grad_full(&sol.theta()).unwrap().norm() <= 1e-10);
    assert!(sol.f_star <= obj.value(&DVector::zeros(8)).unwrap());
    assert!(reference_solution(&obj, 1e-10, 3.0).is_err());
}

#[test]
fn prev_direction_runs_use_previous_epoch() {
    let obj = random_objective(10, 50, 8, LinkKind::Logistic, 0.05);
    let plan = MethodPlan::parse("cmprev").unwrap().with_rank(4);
    let out = run(&plan, &obj, &RunConfig::new(0.05, 50, 3, 1), &DVector::zeros(8), 0.0).unwrap();
    assert_eq!(out.fallbacks.len(), 1);
    assert_eq!(out.fallbacks[0].0, 0);
    // T < k: every epoch falls back to a Gaussian basis.
    let out = run(&plan, &obj, &RunConfig::new(0.05, 2, 3, 1), &DVector::zeros(8), 0.0).unwrap();
    assert_eq!(out.fallbacks.len(), 3);
}
