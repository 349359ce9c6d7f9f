//! Diagonal models: the Hessian diagonal and the robust secant diagonal.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::glm::GlmObjective;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagModel {
    /// Diagonal of the mean Hessian at the snapshot.
    pub per_mean: DVector<f64>,
}

/// Robust secant diagonal around the frozen direction `θ̄_k − θ̄_{k−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecantDiagModel {
    pub direction: DVector<f64>,
    pub sigma_sq: f64,
    /// Exact mean of the per-sample diagonals.
    pub per_mean: DVector<f64>,
    pub prev_point: DVector<f64>,
    denom: DVector<f64>,
}

/// Elementwise `(dir ⊙ δg + σ² diagH) / (dir ⊙ dir + σ²)`.
pub fn robust_secant_diag(
    direction: &DVector<f64>,
    delta_g: &DVector<f64>,
    diag_h: &DVector<f64>,
    sigma_sq: f64,
) -> DVector<f64> {
    DVector::from_fn(direction.len(), |j, _| {
        let dj = direction[j];
        (dj * delta_g[j] + sigma_sq * diag_h[j]) / (dj * dj + sigma_sq)
    })
}

/// Mean over samples of `hess_diag_sample` (one datapass).
pub fn diag_mean(obj: &GlmObjective, theta_bar: &DVector<f64>) -> Result<DVector<f64>> {
    if theta_bar.len() != obj.d() {
        return Err(Error::DimensionMismatch { expected: obj.d(), got: theta_bar.len() });
    }
    let mut acc = DVector::zeros(obj.d());
    for i in 0..obj.n() {
        let row = obj.row(i);
        let w = obj.d2phi(i, row.dot(theta_bar.as_slice()));
        for (&j, &x) in row.indices.iter().zip(row.values) {
            acc[j as usize] += w * x * x;
        }
    }
    acc /= obj.n() as f64;
    acc.add_scalar_mut(obj.lambda());
    Ok(acc)
}

impl DiagModel {
    pub fn build(obj: &GlmObjective, theta_bar: &DVector<f64>) -> Result<Self> {
        Ok(DiagModel { per_mean: diag_mean(obj, theta_bar)? })
    }

    /// `out = diag_i ⊙ v`, with `curvature = φ''_i(x_iᵀθ̄)`.
    #[inline]
    pub fn apply_sample_into(obj: &GlmObjective, i: usize, curvature: f64, v: &[f64], out: &mut [f64]) {
        let lambda = obj.lambda();
        for (o, &vj) in out.iter_mut().zip(v) {
            *o = lambda * vj;
        }
        let row = obj.row(i);
        for (&j, &x) in row.indices.iter().zip(row.values) {
            let j = j as usize;
            out[j] += curvature * x * x * v[j];
        }
    }
}

impl SecantDiagModel {
    /// Freeze the direction `θ̄ − prev` and compute the exact mean of the
    /// per-sample robust secant diagonals in one datapass.
    pub fn build(obj: &GlmObjective, theta_bar: &DVector<f64>, prev_point: &DVector<f64>, sigma_sq: f64) -> Result<Self> {
        if !(sigma_sq > 0.0) || !sigma_sq.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma^2 must be positive and finite, got {sigma_sq}")));
        }
        for v in [theta_bar, prev_point] {
            if v.len() != obj.d() {
                return Err(Error::DimensionMismatch { expected: obj.d(), got: v.len() });
            }
        }
        let direction = theta_bar - prev_point;
        let denom = direction.map(|x| x * x + sigma_sq);
        let mut model = SecantDiagModel {
            direction,
            sigma_sq,
            per_mean: DVector::zeros(obj.d()),
            prev_point: prev_point.clone(),
            denom,
        };
        let mut acc = DVector::zeros(obj.d());
        for i in 0..obj.n() {
            let (dg, w) = model.sample_coefficients(obj, i, theta_bar.as_slice());
            let row = obj.row(i);
            for (&j, &x) in row.indices.iter().zip(row.values) {
                let j = j as usize;
                acc[j] += (dg * model.direction[j] * x + sigma_sq * w * x * x) / model.denom[j];
            }
        }
        acc /= obj.n() as f64;
        acc.add_scalar_mut(obj.lambda());
        model.per_mean = acc;
        Ok(model)
    }

    /// `(φ'_i(x_iᵀθ̄) − φ'_i(x_iᵀθ_prev), φ''_i(x_iᵀθ̄))`
    #[inline]
    fn sample_coefficients(&self, obj: &GlmObjective, i: usize, theta_bar: &[f64]) -> (f64, f64) {
        let row = obj.row(i);
        let z = row.dot(theta_bar);
        let z_prev = row.dot(self.prev_point.as_slice());
        (obj.dphi(i, z) - obj.dphi(i, z_prev), obj.d2phi(i, z))
    }

    /// `out = Ĥ_i ⊙ v` using the sparse structure: the λ parts of δg and
    /// diagH combine to exactly λ.
    #[inline]
    pub fn apply_sample_into(&self, obj: &GlmObjective, i: usize, theta_bar: &[f64], v: &[f64], out: &mut [f64]) {
        let (dg, w) = self.sample_coefficients(obj, i, theta_bar);
        let lambda = obj.lambda();
        for (o, &vj) in out.iter_mut().zip(v) {
            *o = lambda * vj;
        }
        let row = obj.row(i);
        for (&j, &x) in row.indices.iter().zip(row.values) {
            let j = j as usize;
            out[j] += (dg * self.direction[j] * x + self.sigma_sq * w * x * x) / self.denom[j] * v[j];
        }
    }
}

/// Per-sample robust secant diagonal, evaluated from the gradient and
/// Hessian-diagonal oracles.
pub fn secant_diag_sample(
    obj: &GlmObjective,
    i: usize,
    theta_bar: &DVector<f64>,
    model: &SecantDiagModel,
) -> Result<DVector<f64>> {
    let delta_g = obj.grad_sample(i, theta_bar)? - obj.grad_sample(i, &model.prev_point)?;
    let diag_h = obj.hess_diag_sample(i, theta_bar)?;
    Ok(robust_secant_diag(&model.direction, &delta_g, &diag_h, model.sigma_sq))
}

pub fn secant_diag_mean(model: &SecantDiagModel) -> &DVector<f64> {
    &model.per_mean
}
