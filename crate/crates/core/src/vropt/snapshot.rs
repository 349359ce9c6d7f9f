use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::glm::GlmObjective;
use crate::hessmodels::{
    gaussian_basis, normalize_basis, BasisSource, DiagModel, EmbeddingBasis, LowRankScratch, NormalizedBasis,
    SecantDiagModel,
};

use super::plan::{MethodFamily, MethodPlan};

/// Hessian model frozen at the snapshot.
#[derive(Debug, Clone)]
pub enum SnapshotModel {
    None,
    Dense(DMatrix<f64>),
    Diag(DiagModel),
    SecantDiag(SecantDiagModel),
    LowRank(NormalizedBasis),
}

impl SnapshotModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SnapshotModel::None => "none",
            SnapshotModel::Dense(_) => "dense",
            SnapshotModel::Diag(_) => "diag",
            SnapshotModel::SecantDiag(_) => "secant_diag",
            SnapshotModel::LowRank(_) => "low_rank",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub family: MethodFamily,
    pub theta_bar: DVector<f64>,
    pub g_bar: DVector<f64>,
    pub model: SnapshotModel,
    /// Datapasses spent building this snapshot.
    pub datapasses: f64,
    /// Gradient-equivalents charged per inner step with this snapshot.
    pub step_cost: f64,
    /// Set when the requested model could not be built and a fallback was used.
    pub fallback: Option<String>,
}

/// Epoch-to-epoch state that some models need.
#[derive(Debug, Clone, Default)]
pub struct SnapshotContext {
    /// Previous snapshot point (secant diagonal).
    pub prev_theta_bar: Option<DVector<f64>>,
    /// Block means of the previous epoch's directions.
    pub prev_directions: Option<EmbeddingBasis>,
    /// Seed for a Gaussian basis.
    pub basis_seed: u64,
    /// Relative eigenvalue cutoff for `(SᵀA)^{†/2}`.
    pub rel_tol: f64,
}

fn low_rank_step_cost(family: MethodFamily) -> f64 {
    if family == MethodFamily::ActionMatching {
        4.0
    } else {
        3.0
    }
}

/// Compute `ḡ = ∇F(θ̄)` and the model for `plan` at `theta_bar`.
pub fn make_snapshot(
    plan: &MethodPlan,
    obj: &GlmObjective,
    theta_bar: &DVector<f64>,
    ctx: &SnapshotContext,
) -> Result<Snapshot> {
    plan.validate(obj)?;
    if theta_bar.len() != obj.d() {
        return Err(Error::DimensionMismatch { expected: obj.d(), got: theta_bar.len() });
    }
    let g_bar = obj.grad_full(theta_bar)?;
    let mut fallback = None;
    let (model, passes, step_cost) = match plan.family {
        MethodFamily::Svrg => (SnapshotModel::None, 1.0, 2.0),
        MethodFamily::Svrg2 => (SnapshotModel::Dense(obj.hess_dense_full(theta_bar)?), 2.0, 3.0),
        MethodFamily::Diag => (SnapshotModel::Diag(DiagModel::build(obj, theta_bar)?), 2.0, 3.0),
        MethodFamily::SecantDiag => match &ctx.prev_theta_bar {
            Some(prev) => {
                let m = SecantDiagModel::build(obj, theta_bar, prev, plan.sigma_sq)?;
                (SnapshotModel::SecantDiag(m), 2.0, 4.0)
            }
            None => {
                fallback = Some("no previous snapshot; using the Hessian diagonal".to_string());
                (SnapshotModel::Diag(DiagModel::build(obj, theta_bar)?), 2.0, 3.0)
            }
        },
        MethodFamily::CurvatureMatching | MethodFamily::ActionMatching => {
            let basis = match (plan.basis_source, &ctx.prev_directions) {
                (BasisSource::PrevDirections, Some(b)) if b.k() == plan.rank && b.d() == obj.d() => b.clone(),
                (BasisSource::PrevDirections, _) => {
                    fallback = Some("previous directions unavailable; using a Gaussian basis".to_string());
                    gaussian_basis(obj.d(), plan.rank, ctx.basis_seed)?
                }
                (BasisSource::Gaussian, _) => gaussian_basis(obj.d(), plan.rank, ctx.basis_seed)?,
            };
            let a = obj.hess_action_full(theta_bar, &basis.s)?;
            let nb = normalize_basis(&a, &basis.s, ctx.rel_tol)?;
            (SnapshotModel::LowRank(nb), 1.0 + plan.rank as f64, low_rank_step_cost(plan.family))
        }
    };
    Ok(Snapshot { family: plan.family, theta_bar: theta_bar.clone(), g_bar, model, datapasses: passes, step_cost, fallback })
}

/// Work buffers for applying snapshot models without allocation.
#[derive(Debug, Clone)]
pub struct ModelScratch {
    lowrank: Option<LowRankScratch>,
}

impl ModelScratch {
    pub fn new(snap: &Snapshot) -> Self {
        let lowrank = match &snap.model {
            SnapshotModel::LowRank(nb) => Some(LowRankScratch::new(nb.d(), nb.k())),
            _ => None,
        };
        ModelScratch { lowrank }
    }
}

impl Snapshot {
    pub fn d(&self) -> usize {
        self.theta_bar.len()
    }

    /// `out = Ĥ_i delta`; `curvature = φ''_i(x_iᵀθ̄)`.
    pub(crate) fn apply_sample_into(
        &self,
        obj: &GlmObjective,
        i: usize,
        curvature: f64,
        delta: &[f64],
        out: &mut [f64],
        scratch: &mut ModelScratch,
    ) {
        match &self.model {
            SnapshotModel::None => out.fill(0.0),
            SnapshotModel::Dense(_) => obj.hess_vec_into(i, curvature, delta, out),
            SnapshotModel::Diag(_) => DiagModel::apply_sample_into(obj, i, curvature, delta, out),
            SnapshotModel::SecantDiag(m) => m.apply_sample_into(obj, i, self.theta_bar.as_slice(), delta, out),
            SnapshotModel::LowRank(nb) => {
                let s = scratch.lowrank.as_mut().expect("low-rank scratch");
                if self.family == MethodFamily::ActionMatching {
                    nb.apply_am_into(obj, i, curvature, delta, out, s)
                } else {
                    nb.apply_cm_into(obj, i, curvature, delta, out, s)
                }
            }
        }
    }

    /// `out = M delta` where `M` is the exact sample mean of `Ĥ_i`.
    pub(crate) fn apply_mean_into(&self, delta: &[f64], out: &mut [f64], scratch: &mut ModelScratch) {
        match &self.model {
            SnapshotModel::None => out.fill(0.0),
            SnapshotModel::Dense(h) => {
                let d = self.d();
                out.fill(0.0);
                for (c, &dc) in delta.iter().enumerate() {
                    if dc == 0.0 {
                        continue;
                    }
                    for (o, &x) in out.iter_mut().zip(&h.as_slice()[c * d..(c + 1) * d]) {
                        *o += dc * x;
                    }
                }
            }
            SnapshotModel::Diag(m) => mul_elementwise(&m.per_mean, delta, out),
            SnapshotModel::SecantDiag(m) => mul_elementwise(&m.per_mean, delta, out),
            SnapshotModel::LowRank(nb) => {
                nb.apply_mean_into(delta, out, scratch.lowrank.as_mut().expect("low-rank scratch"))
            }
        }
    }
}

fn mul_elementwise(diag: &DVector<f64>, v: &[f64], out: &mut [f64]) {
    for ((o, &a), &b) in out.iter_mut().zip(diag.iter()).zip(v) {
        *o = a * b;
    }
}
