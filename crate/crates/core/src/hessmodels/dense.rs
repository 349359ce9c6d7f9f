//! Dense-matrix forms of the CM and AM approximations, written directly from
//! the closed-form solutions. These serve as small-d diagnostics and as an
//! independent check of the factored per-sample corrections.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::linalg::pinv_sym;

/// `HS (SᵀHS)† Sᵀ H_i S (SᵀHS)† SᵀH`
pub fn cm_dense(h_mean: &DMatrix<f64>, h_i: &DMatrix<f64>, s: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let hs = h_mean * s;
    let p = pinv_sym(&(s.transpose() * &hs), rel_tol)?.matrix;
    Ok(&hs * &p * s.transpose() * h_i * s * &p * hs.transpose())
}

/// `HS P Sᵀ H_i (I − S P SᵀH) + H_i S P SᵀH` with `P = (SᵀHS)†`.
pub fn am_dense(h_mean: &DMatrix<f64>, h_i: &DMatrix<f64>, s: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let d = h_mean.nrows();
    let hs = h_mean * s;
    let p = pinv_sym(&(s.transpose() * &hs), rel_tol)?.matrix;
    let proj = DMatrix::identity(d, d) - s * &p * hs.transpose();
    Ok(&hs * &p * s.transpose() * h_i * proj + h_i * s * &p * hs.transpose())
}

/// `HS (SᵀHS)† SᵀH`, the common mean of both models.
pub fn lowrank_mean_dense(h_mean: &DMatrix<f64>, s: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let hs = h_mean * s;
    let p = pinv_sym(&(s.transpose() * &hs), rel_tol)?.matrix;
    Ok(&hs * p * hs.transpose())
}
