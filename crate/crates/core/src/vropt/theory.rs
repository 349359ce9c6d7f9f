//! One-epoch contraction checks against the stepsize/epoch-length rules of
//! the convergence analysis.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::dataset_stats;
use crate::error::{Error, Result};
use crate::glm::{GlmObjective, LinkKind};

use super::plan::{MethodFamily, MethodPlan};
use super::reference::ReferenceSolution;
use super::run::{run, RunConfig, RunError, SnapshotRule};
use super::step::Projection;

pub const CONTRACTION_BOUND: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// SVRG2 with `γ = 1/(4L)`, `T = ⌈16L/μ⌉`.
    Svrg2Prop,
    /// SVRG with `γ = 1/(4R²)`, `T = ⌈32R²/μ⌉`.
    SvrgAppendix,
    /// SVRG2 with `γ = α/(8R²)`, `T = ⌈64R²/(αμ)⌉`.
    Stability,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Svrg2Prop => "svrg2_prop",
            Regime::SvrgAppendix => "svrg_appendix",
            Regime::Stability => "stability",
        }
    }

    fn family(self) -> MethodFamily {
        match self {
            Regime::SvrgAppendix => MethodFamily::Svrg,
            Regime::Svrg2Prop | Regime::Stability => MethodFamily::Svrg2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub regime: Regime,
    pub gamma: f64,
    pub inner_steps: usize,
    pub l: f64,
    pub mu: f64,
    pub r_sq: f64,
    pub alpha: f64,
    /// Distance of each start point from `θ*`.
    pub start_distance: f64,
    pub radius: f64,
    pub ratios: Vec<f64>,
    pub mean_ratio: f64,
    pub max_ratio: f64,
    pub bound: f64,
    /// False when the regime's curvature assumptions could only be estimated.
    pub assumptions_checked: bool,
    pub note: Option<String>,
}

/// `max(F(θ̄₁) − F*, 0) / (F(θ̄₀) − F*)` after one epoch from `theta0`;
/// zero when `theta0` is already optimal.
pub fn one_epoch_ratio(
    plan: &MethodPlan,
    obj: &GlmObjective,
    config: &RunConfig,
    theta0: &DVector<f64>,
    f_star: f64,
) -> Result<f64> {
    let f0 = obj.value(theta0)?;
    if f0 - f_star <= 0.0 {
        return Ok(0.0);
    }
    let cfg = RunConfig { epochs: 1, ..config.clone() };
    let out = match run(plan, obj, &cfg, theta0, f_star) {
        Ok(out) => out,
        Err(RunError::Diverged { .. }) => return Ok(f64::INFINITY),
        Err(RunError::Failed(e)) => return Err(e),
    };
    let f1 = out.trace.last().map_or(f0, |r| r.fval);
    Ok((f1 - f_star).max(0.0) / (f0 - f_star))
}

fn unit_vector(d: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let n = v.norm();
        if n > 0.0 {
            return v / n;
        }
    }
}

/// Runs one averaged epoch per seed from `θ* + ρu` (random unit `u`) with
/// projection onto the ball of radius `2ρ` around `θ*`, using the stepsize
/// and epoch length the regime prescribes.
///
/// `μ` and `L` come from the mean Hessian at `θ*` (exact for ridge). `R²` is
/// the per-sample smoothness `max‖x_i‖² + λ`. For the logistic link `α` is
/// estimated as the smallest `φ''` over the ball's sample margins and the
/// report is marked unchecked.
pub fn epoch_contraction_check(
    obj: &GlmObjective,
    regime: Regime,
    seeds: usize,
    reference: &ReferenceSolution,
) -> Result<ContractionReport> {
    if seeds == 0 {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    let theta_star = reference.theta();
    if theta_star.len() != obj.d() {
        return Err(Error::DimensionMismatch { expected: obj.d(), got: theta_star.len() });
    }
    let sm = obj.smoothness_constants(&theta_star)?;
    let (l, mu) = (sm.l, sm.mu_lower);
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument("contraction checks need a strongly convex objective (mu > 0)".into()));
    }
    let r_sq = dataset_stats(obj.data(), obj.lambda()).l_max;

    let mut note = None;
    let mut start_distance = 1.0;
    let (alpha, assumptions_checked) = match obj.link() {
        LinkKind::Squared => (1.0, true),
        LinkKind::Logistic => {
            // D² ≤ Lα/(8β²R²) with β the third-derivative bound; α depends on
            // the ball, so shrink the start until the estimate is consistent.
            let beta = obj.link().third_derivative_bound();
            let mut alpha = min_curvature(obj, &theta_star, 2.0 * start_distance);
            for _ in 0..60 {
                let d_max = (l * alpha / (8.0 * beta * beta * r_sq)).sqrt();
                if 2.0 * start_distance <= d_max {
                    break;
                }
                start_distance = 0.5 * d_max;
                alpha = min_curvature(obj, &theta_star, 2.0 * start_distance);
            }
            note = Some(format!("assumption unchecked: alpha = {alpha:.3e} estimated from sample margins"));
            (alpha, false)
        }
    };
    let radius = 2.0 * start_distance;
    let (gamma, t) = match regime {
        Regime::Svrg2Prop => (1.0 / (4.0 * l), (16.0 * l / mu).ceil()),
        Regime::SvrgAppendix => (1.0 / (4.0 * r_sq), (32.0 * r_sq / mu).ceil()),
        Regime::Stability => (alpha / (8.0 * r_sq), (64.0 * r_sq / (alpha * mu)).ceil()),
    };
    if !(t.is_finite() && (1.0..1e9).contains(&t)) {
        return Err(Error::InvalidArgument(format!("epoch length {t} is not usable")));
    }
    let inner_steps = t as usize;
    let plan = MethodPlan::new(regime.family());
    let mut ratios = Vec::with_capacity(seeds);
    for s in 0..seeds as u64 {
        let theta0 = &theta_star + unit_vector(obj.d(), s.wrapping_mul(7919).wrapping_add(1)) * start_distance;
        let mut cfg = RunConfig::new(gamma, inner_steps, 1, s);
        cfg.snapshot_rule = SnapshotRule::EpochAverage;
        cfg.projection = Some(Projection::new(&theta_star, radius)?);
        ratios.push(one_epoch_ratio(&plan, obj, &cfg, &theta0, reference.f_star)?);
    }
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(ContractionReport {
        regime,
        gamma,
        inner_steps,
        l,
        mu,
        r_sq,
        alpha,
        start_distance,
        radius,
        ratios,
        mean_ratio,
        max_ratio,
        bound: CONTRACTION_BOUND,
        assumptions_checked,
        note,
    })
}

/// Smallest `φ''_i` over margins reachable within `radius` of `center`.
fn min_curvature(obj: &GlmObjective, center: &DVector<f64>, radius: f64) -> f64 {
    (0..obj.n())
        .map(|i| {
            let z = obj.margin(i, center.as_slice());
            let reach = radius * obj.data().sq_norms()[i].sqrt();
            // φ'' of the logistic loss decreases in |z|.
            obj.d2phi(i, z.abs() + reach).min(obj.d2phi(i, -(z.abs() + reach)))
        })
        .fold(f64::INFINITY, f64::min)
}
