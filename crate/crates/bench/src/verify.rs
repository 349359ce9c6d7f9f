//! Self-checks of the optimizer invariants on small seeded instances.

use std::fmt::Write as _;
use std::sync::Arc;

use anyhow::Result;
use cvtrack::dataio::{synth_problem, SynthKind};
use cvtrack::glm::{GlmObjective, LinkKind};
use cvtrack::hessmodels::{
    am_correct, cm_correct, data_hessians, gaussian_basis, measure_eta, normalize_basis, secant_diag_sample,
    SecantDiagModel,
};
use cvtrack::linalg::{numerical_rank, DEFAULT_REL_TOL};
use cvtrack::vropt::{
    control_variate, control_variate_mean, epoch_contraction_check, inner_step, make_snapshot, reference_solution,
    step_direction, MethodPlan, Regime, Snapshot, SnapshotContext, SnapshotModel, DEFAULT_PASS_CAP, METHOD_NAMES,
};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Level {
    Fast,
    Full,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub level: Level,
    /// Perturbs every snapshot's mean term before the unbiasedness check.
    pub inject_fault: bool,
}

#[derive(Debug, Clone)]
pub struct CheckRow {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
}

impl CheckRow {
    fn at_most(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        CheckRow { name: name.into(), measured, bound, passed: measured <= bound }
    }
}

pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn row(&self, name: &str) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_table(&self) -> String {
        let w = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
        let mut s = format!("{:<w$}  {:>11}  {:>11}  result\n", "check", "measured", "bound");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<w$}  {:>11.3e}  {:>11.3e}  {}",
                r.name,
                r.measured,
                r.bound,
                if r.passed { "pass" } else { "FAIL" }
            );
        }
        s
    }
}

fn random_vector(d: usize, seed: u64) -> DVector<f64> {
    gaussian_basis(d, 1, seed).expect("d >= 1").s.column(0).into_owned()
}

/// Small seeded instance; sizes and regularization vary with `seed`.
pub fn small_objective(seed: u64, link: LinkKind) -> Result<GlmObjective> {
    sized_objective(seed, link, 2 + (seed as usize * 3) % 9)
}

fn sized_objective(seed: u64, link: LinkKind, d: usize) -> Result<GlmObjective> {
    let n = (10 + (seed as usize * 7) % 41).max(d);
    let kind = if link == LinkKind::Squared { SynthKind::Ridge } else { SynthKind::Logistic };
    let ds = synth_problem(kind, n, d, 1.0 + (seed % 5) as f64 * 4.0, seed)?;
    let lambda = 0.01 * (1 + seed % 4) as f64;
    Ok(GlmObjective::new(Arc::new(ds), link, lambda)?)
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn mat_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn corrupt(snap: &mut Snapshot) {
    snap.g_bar[0] += 1e-3;
    if let SnapshotModel::Dense(m) = &mut snap.model {
        m[(0, 0)] += 1e-3;
    }
}

/// Snapshot at `θ̄` with a previous snapshot point so every family builds its
/// own model rather than a fallback.
fn snapshot(plan: &MethodPlan, obj: &GlmObjective, seed: u64) -> Result<(Snapshot, DVector<f64>)> {
    let d = obj.d();
    let theta_bar = random_vector(d, seed) * 0.5;
    let prev = &theta_bar + random_vector(d, seed + 1) * 0.3;
    let ctx = SnapshotContext { prev_theta_bar: Some(prev), basis_seed: seed, rel_tol: DEFAULT_REL_TOL, ..Default::default() };
    let plan = plan.with_rank(plan.rank.min(d).max(1));
    let snap = make_snapshot(&plan, obj, &theta_bar, &ctx)?;
    let theta = &theta_bar + random_vector(d, seed + 2) * 0.4;
    Ok((snap, theta))
}

fn unbiasedness(instances: u64, inject: bool) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for name in METHOD_NAMES {
        let plan = MethodPlan::parse(name)?;
        let (mut worst_dir, mut worst_mean) = (0.0f64, 0.0f64);
        for seed in 0..instances {
            let link = if seed % 2 == 0 { LinkKind::Logistic } else { LinkKind::Squared };
            let obj = small_objective(seed, link)?;
            let (mut snap, theta) = snapshot(&plan, &obj, seed)?;
            if inject {
                corrupt(&mut snap);
            }
            let n = obj.n() as f64;
            let mut mean_dir = DVector::zeros(obj.d());
            let mut mean_cv = DVector::zeros(obj.d());
            for i in 0..obj.n() {
                mean_dir += step_direction(&obj, &snap, i, &theta)? / n;
                mean_cv += control_variate(&obj, &snap, i, &theta)? / n;
            }
            worst_dir = worst_dir.max(rel(&mean_dir, &obj.grad_full(&theta)?));
            let cv_mean = control_variate_mean(&obj, &snap, &theta)?;
            worst_mean = worst_mean.max(rel(&mean_cv, &cv_mean));
        }
        rows.push(CheckRow::at_most(format!("unbiased/{name}"), worst_dir, 1e-10));
        rows.push(CheckRow::at_most(format!("mean_consistent/{name}"), worst_mean, 1e-10));
    }
    Ok(rows)
}

/// SVRG2 steps on ridge objectives against full gradient steps.
fn quadratic_exactness(instances: u64, steps: usize) -> Result<CheckRow> {
    let plan = MethodPlan::parse("svrg2")?;
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let obj = small_objective(seed, LinkKind::Squared)?;
        let (snap, mut theta) = snapshot(&plan, &obj, seed)?;
        let gamma = 0.1 / cvtrack::dataset_stats(obj.data(), obj.lambda()).l_max;
        for t in 0..steps {
            let i = (t * 7919 + seed as usize) % obj.n();
            let next = inner_step(&obj, &snap, &theta, i, gamma, None)?;
            let gd = &theta - obj.grad_full(&theta)? * gamma;
            worst = worst.max((&next - &gd).amax() / theta.amax().max(1.0));
            theta = next;
        }
    }
    Ok(CheckRow::at_most("quadratic_exact/svrg2", worst, 1e-12))
}

fn densify(d: usize, apply: impl Fn(&DVector<f64>) -> Result<DVector<f64>>) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut e = DVector::zeros(d);
        e[j] = 1.0;
        m.set_column(j, &apply(&e)?);
    }
    Ok(m)
}

/// CM/AM constraints, symmetry, ranks and means against dense oracles.
fn lowrank_models(trials: u64) -> Result<Vec<CheckRow>> {
    let (mut cm_c, mut am_c, mut am_sym, mut means, mut rank_excess, mut full_rank) = (0f64, 0f64, 0f64, 0f64, 0f64, 0f64);
    for seed in 0..trials {
        let link = if seed % 2 == 0 { LinkKind::Logistic } else { LinkKind::Squared };
        let d = 2 + (seed as usize * 5) % 7;
        let obj = sized_objective(seed, link, d)?;
        let k = (1 + seed as usize % 3).min(d);
        let theta = random_vector(d, seed + 7) * 0.5;
        let s = gaussian_basis(d, k, seed)?.s;
        let a = obj.hess_action_full(&theta, &s)?;
        let nb = normalize_basis(&a, &s, DEFAULT_REL_TOL)?;
        let h = obj.hess_dense_full(&theta)?;
        let hs = &h * &s;
        let p = (s.transpose() * &hs).pseudo_inverse(1e-12).map_err(anyhow::Error::msg)?;
        let oracle_mean = &hs * &p * hs.transpose();
        means = means.max(mat_rel(&nb.dense_mean(), &oracle_mean));
        for i in [0, obj.n() / 2, obj.n() - 1] {
            let hi = obj.hess_dense_sample(i, &theta)?;
            let cm = densify(d, |v| Ok(cm_correct(&obj, i, &theta, &nb, v)?))?;
            let am = densify(d, |v| Ok(am_correct(&obj, i, &theta, &nb, v)?))?;
            cm_c = cm_c.max(mat_rel(&(s.transpose() * &cm * &s), &(s.transpose() * &hi * &s)));
            am_c = am_c.max(mat_rel(&(&am * &s), &(&hi * &s)));
            am_sym = am_sym.max(mat_rel(&am, &am.transpose()));
            let excess = numerical_rank(&cm, 1e-9).saturating_sub(k) + numerical_rank(&am, 1e-9).saturating_sub(2 * k);
            rank_excess = rank_excess.max(excess as f64);
        }
        // k = d recovers H_i exactly.
        let s_full = gaussian_basis(d, d, seed + 3)?.s;
        let nb_full = normalize_basis(&obj.hess_action_full(&theta, &s_full)?, &s_full, DEFAULT_REL_TOL)?;
        let hi = obj.hess_dense_sample(0, &theta)?;
        let cm = densify(d, |v| Ok(cm_correct(&obj, 0, &theta, &nb_full, v)?))?;
        let am = densify(d, |v| Ok(am_correct(&obj, 0, &theta, &nb_full, v)?))?;
        full_rank = full_rank.max(mat_rel(&cm, &hi)).max(mat_rel(&am, &hi));
    }
    Ok(vec![
        CheckRow::at_most("cm_constraint", cm_c, 1e-8),
        CheckRow::at_most("am_constraint", am_c, 1e-8),
        CheckRow::at_most("am_symmetric", am_sym, 1e-8),
        CheckRow::at_most("lowrank_mean_closed_form", means, 1e-8),
        CheckRow::at_most("lowrank_rank_excess", rank_excess, 0.0),
        CheckRow::at_most("full_rank_recovery", full_rank, 1e-8),
    ])
}

fn eta_endpoints(instances: u64) -> Result<Vec<CheckRow>> {
    let (mut exact, mut zero) = (0f64, 0f64);
    for seed in 0..instances {
        let link = if seed % 2 == 0 { LinkKind::Logistic } else { LinkKind::Squared };
        let obj = small_objective(seed, link)?;
        let theta = random_vector(obj.d(), seed) * 0.3;
        exact = exact.max(measure_eta(&obj, &theta, &data_hessians(&obj, &theta)?)?);
        let zeros = vec![DMatrix::zeros(obj.d(), obj.d()); obj.n()];
        zero = zero.max(measure_eta(&obj, &theta, &zeros)?);
    }
    Ok(vec![CheckRow::at_most("eta_exact", exact, 1e-10), CheckRow::at_most("eta_zero", zero, 1.0 + 1e-10)])
}

fn secant_limits(instances: u64) -> Result<Vec<CheckRow>> {
    let (mut wide, mut narrow) = (0f64, 0f64);
    for seed in 0..instances {
        let obj = small_objective(seed, LinkKind::Logistic)?;
        let d = obj.d();
        let theta = random_vector(d, seed);
        let dir = DVector::from_fn(d, |j, _| 0.2 + 0.05 * j as f64);
        let prev = &theta - &dir;
        let m_wide = SecantDiagModel::build(&obj, &theta, &prev, 1e12)?;
        let m_narrow = SecantDiagModel::build(&obj, &theta, &prev, 1e-12)?;
        for i in 0..obj.n() {
            let diag = obj.hess_diag_sample(i, &theta)?;
            let dg = obj.grad_sample(i, &theta)? - obj.grad_sample(i, &prev)?;
            wide = wide.max(rel(&secant_diag_sample(&obj, i, &theta, &m_wide)?, &diag));
            narrow = narrow.max(rel(&secant_diag_sample(&obj, i, &theta, &m_narrow)?, &dg.component_div(&dir)));
        }
    }
    Ok(vec![CheckRow::at_most("secant_wide_is_diag", wide, 1e-6), CheckRow::at_most("secant_narrow_is_quotient", narrow, 1e-6)])
}

fn contraction(seeds: usize, n: usize, d: usize) -> Result<Vec<CheckRow>> {
    let ds = synth_problem(SynthKind::Ridge, n, d, 10.0, 11)?;
    let obj = GlmObjective::new(Arc::new(ds), LinkKind::Squared, 1e-3)?;
    let reference = reference_solution(&obj, 1e-12, DEFAULT_PASS_CAP)?;
    [Regime::Svrg2Prop, Regime::SvrgAppendix]
        .into_iter()
        .map(|regime| {
            let rep = epoch_contraction_check(&obj, regime, seeds, &reference)?;
            Ok(CheckRow::at_most(format!("contraction/{}", regime.name()), rep.mean_ratio, 0.80))
        })
        .collect()
}

pub fn verify(opts: VerifyOptions) -> Result<VerifyReport> {
    let full = opts.level == Level::Full;
    let mut rows = unbiasedness(if full { 20 } else { 8 }, opts.inject_fault)?;
    rows.push(quadratic_exactness(if full { 5 } else { 2 }, 1000)?);
    rows.extend(lowrank_models(if full { 100 } else { 20 })?);
    rows.extend(eta_endpoints(if full { 20 } else { 6 })?);
    rows.extend(secant_limits(if full { 10 } else { 3 })?);
    rows.extend(if full { contraction(20, 1000, 20)? } else { contraction(5, 300, 8)? });
    Ok(VerifyReport { rows })
}
