use nalgebra::{DMatrix, DVector};

use crate::dataio::dataset_stats;
use crate::error::{Error, Result};
use crate::glm::GlmObjective;
use crate::linalg::max_generalized_eigenvalue;

const RANGE_TOL: f64 = 1e-12;

/// Dense data-term Hessians `φ''_i(x_iᵀθ̄) x_i x_iᵀ` (no regularizer).
pub fn data_hessians(obj: &GlmObjective, theta_bar: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
    let zero = obj.with_lambda(0.0)?;
    (0..obj.n()).map(|i| zero.hess_dense_sample(i, theta_bar)).collect()
}

/// Smallest `η` with `(1/N) Σ (H_i − Ĥ_i)² ≼ R² η (1/N) Σ H_i`, where `H_i`
/// are the data-term Hessians at `θ̄` and `approximations[i]` approximates
/// `H_i`. Computed as the largest generalized eigenvalue on the range of the
/// mean Hessian.
pub fn measure_eta(obj: &GlmObjective, theta_bar: &DVector<f64>, approximations: &[DMatrix<f64>]) -> Result<f64> {
    if approximations.len() != obj.n() {
        return Err(Error::DimensionMismatch { expected: obj.n(), got: approximations.len() });
    }
    let hs = data_hessians(obj, theta_bar)?;
    let d = obj.d();
    let mut second = DMatrix::zeros(d, d);
    let mut mean = DMatrix::zeros(d, d);
    for (h, h_hat) in hs.iter().zip(approximations) {
        if h_hat.shape() != (d, d) {
            return Err(Error::DimensionMismatch { expected: d, got: h_hat.nrows() });
        }
        let diff = h - h_hat;
        second += diff.transpose() * &diff;
        mean += h;
    }
    let n = obj.n() as f64;
    second /= n;
    mean /= n;
    let r2 = dataset_stats(obj.data(), 0.0).radius_sq;
    if r2 == 0.0 {
        return Err(Error::DegenerateHessian);
    }
    let eta = max_generalized_eigenvalue(&second, &(mean * r2), RANGE_TOL)?;
    Ok(eta.max(0.0))
}
