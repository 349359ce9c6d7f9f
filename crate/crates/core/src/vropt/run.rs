use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::GlmObjective;
use crate::hessmodels::{BasisSource, DirectionBlocks};
use crate::linalg::DEFAULT_REL_TOL;

use super::plan::MethodPlan;
use super::snapshot::{make_snapshot, Snapshot, SnapshotContext};
use super::step::{Projection, Stepper};
use super::trace::{relative_subopt, Trace, TraceRecord};

/// Abort when `F` grows past this multiple of `F(θ₀)`.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotRule {
    #[default]
    LastIterate,
    /// Mean of the inner iterates `θ_0, …, θ_{T−1}`.
    EpochAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub gamma: f64,
    pub inner_steps: usize,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default)]
    pub snapshot_rule: SnapshotRule,
    #[serde(default)]
    pub projection: Option<Projection>,
    /// Stop before an epoch once this many datapasses have been spent.
    #[serde(default)]
    pub max_datapasses: Option<f64>,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

fn default_rel_tol() -> f64 {
    DEFAULT_REL_TOL
}

impl RunConfig {
    pub fn new(gamma: f64, inner_steps: usize, epochs: usize, seed: u64) -> Self {
        RunConfig {
            gamma,
            inner_steps,
            epochs,
            seed,
            snapshot_rule: SnapshotRule::LastIterate,
            projection: None,
            max_datapasses: None,
            rel_tol: DEFAULT_REL_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        if self.inner_steps == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument("inner steps and epochs must be >= 1".into()));
        }
        if let Some(p) = &self.projection {
            if !(p.radius > 0.0) {
                return Err(Error::InvalidArgument(format!("projection radius must be > 0, got {}", p.radius)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub theta: DVector<f64>,
    /// Fallbacks taken while building snapshots, as `(epoch, message)`.
    pub fallbacks: Vec<(usize, String)>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("diverged in epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String, partial: Box<RunOutput> },
    #[error(transparent)]
    Failed(#[from] Error),
}

/// Seed for the Gaussian basis of `epoch`, independent of the sampling stream.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Epoch-structured variance-reduced SGD from `theta0`, logging relative
/// suboptimality against `f_star` once per epoch (plus the starting point).
pub fn run(
    plan: &MethodPlan,
    obj: &GlmObjective,
    config: &RunConfig,
    theta0: &DVector<f64>,
    f_star: f64,
) -> std::result::Result<RunOutput, RunError> {
    config.validate()?;
    plan.validate(obj)?;
    if theta0.len() != obj.d() {
        return Err(Error::DimensionMismatch { expected: obj.d(), got: theta0.len() }.into());
    }
    let (n, d, t_steps) = (obj.n(), obj.d(), config.inner_steps);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let f0 = obj.value(theta0)?;
    let mut out = RunOutput { trace: Trace::default(), theta: theta0.clone(), fallbacks: Vec::new() };
    out.trace.push(TraceRecord { epoch: 0, datapasses: 0.0, wall_ms: 0.0, fval: f0, subopt: relative_subopt(f0, f0, f_star) });

    let mut ctx = SnapshotContext { rel_tol: config.rel_tol, ..Default::default() };
    let mut theta_bar = theta0.clone();
    let mut passes = 0.0;
    let mut elapsed = std::time::Duration::ZERO;
    let mut theta = vec![0.0; d];
    let mut dir = vec![0.0; d];
    let mut avg = vec![0.0; d];
    let collect_dirs = plan.is_low_rank() && plan.basis_source == BasisSource::PrevDirections;

    for epoch in 0..config.epochs {
        if config.max_datapasses.is_some_and(|budget| passes >= budget) {
            break;
        }
        let started = Instant::now();
        ctx.basis_seed = epoch_seed(config.seed, epoch);
        let snap: Snapshot = make_snapshot(plan, obj, &theta_bar, &ctx)?;
        if let Some(msg) = &snap.fallback {
            out.fallbacks.push((epoch, msg.clone()));
        }
        let mut stepper = Stepper::new(obj, &snap)?;
        let mut blocks = if collect_dirs { DirectionBlocks::new(d, t_steps, plan.rank).ok() } else { None };
        theta.copy_from_slice(theta_bar.as_slice());
        avg.fill(0.0);
        for _ in 0..t_steps {
            let i = rng.random_range(0..n);
            if config.snapshot_rule == SnapshotRule::EpochAverage {
                for (a, &x) in avg.iter_mut().zip(&theta) {
                    *a += x;
                }
            }
            stepper.direction_into(i, &theta, &mut dir);
            if let Some(b) = blocks.as_mut() {
                b.push(&dir);
            }
            for (x, &g) in theta.iter_mut().zip(&dir) {
                *x -= config.gamma * g;
            }
            if let Some(p) = &config.projection {
                p.project_in_place(&mut theta);
            }
            if theta.iter().any(|x| !x.is_finite()) {
                out.theta = DVector::from_column_slice(&theta);
                return Err(RunError::Diverged {
                    epoch: epoch + 1,
                    reason: "non-finite iterate".into(),
                    partial: Box::new(out),
                });
            }
        }
        passes += snap.datapasses + snap.step_cost * t_steps as f64 / n as f64;
        let next = match config.snapshot_rule {
            SnapshotRule::LastIterate => DVector::from_column_slice(&theta),
            SnapshotRule::EpochAverage => DVector::from_iterator(d, avg.iter().map(|a| a / t_steps as f64)),
        };
        ctx.prev_theta_bar = Some(std::mem::replace(&mut theta_bar, next));
        ctx.prev_directions = blocks.and_then(|b| b.finish().ok());
        elapsed += started.elapsed();

        let f = obj.value(&theta_bar)?;
        out.theta = theta_bar.clone();
        out.trace.push(TraceRecord {
            epoch: epoch + 1,
            datapasses: passes,
            wall_ms: elapsed.as_secs_f64() * 1e3,
            fval: f,
            subopt: relative_subopt(f, f0, f_star),
        });
        if !f.is_finite() || f > DIVERGENCE_FACTOR * f0.abs().max(f64::MIN_POSITIVE) {
            return Err(RunError::Diverged {
                epoch: epoch + 1,
                reason: format!("objective {f:e} exceeds {DIVERGENCE_FACTOR:e} x F(theta0) = {f0:e}"),
                partial: Box::new(out),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_seeds_differ() {
        assert_ne!(epoch_seed(1, 0), epoch_seed(1, 1));
        assert_ne!(epoch_seed(1, 0), epoch_seed(2, 0));
    }
}
