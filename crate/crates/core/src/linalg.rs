//! Small dense symmetric routines on top of nalgebra's eigensolver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// `(M + Mᵀ) / 2`
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Result of a thresholded spectral function.
#[derive(Debug, Clone)]
pub struct SpectralPinv {
    pub matrix: DMatrix<f64>,
    pub effective_rank: usize,
    pub eigenvalues: DVector<f64>,
}

fn spectral_map(m: &DMatrix<f64>, rel_tol: f64, f: impl Fn(f64) -> f64) -> Result<SpectralPinv> {
    if !m.is_square() {
        return Err(Error::InvalidArgument(format!("expected a square matrix, got {:?}", m.shape())));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let k = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let lmax = eig.eigenvalues.max();
    let cut = rel_tol * lmax;
    let mut out = DMatrix::zeros(k, k);
    let mut rank = 0;
    if lmax > 0.0 {
        for (j, &l) in eig.eigenvalues.iter().enumerate() {
            if l > cut && l > 0.0 {
                rank += 1;
                let v = eig.eigenvectors.column(j);
                out += (v * v.transpose()) * f(l);
            }
        }
    }
    Ok(SpectralPinv { matrix: symmetrize(&out), effective_rank: rank, eigenvalues: eig.eigenvalues })
}

/// Pseudoinverse square root `M^{†/2}` of the symmetrized input.
///
/// Eigenvalues at or below `rel_tol * λ_max` (or non-positive) are dropped.
pub fn pinv_sqrt(m: &DMatrix<f64>, rel_tol: f64) -> Result<SpectralPinv> {
    spectral_map(m, rel_tol, |l| 1.0 / l.sqrt())
}

/// Pseudoinverse of the symmetrized input with the same threshold rule.
pub fn pinv_sym(m: &DMatrix<f64>, rel_tol: f64) -> Result<SpectralPinv> {
    spectral_map(m, rel_tol, |l| 1.0 / l)
}

/// Largest `t` with `a v = t b v` for `v` in the range of `b` (both symmetric,
/// `b` PSD). Returns an error when `b` is numerically zero.
pub fn max_generalized_eigenvalue(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_tol: f64) -> Result<f64> {
    if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let eig = SymmetricEigen::new(symmetrize(b));
    let lmax = eig.eigenvalues.max();
    if !(lmax > 0.0) {
        return Err(Error::DegenerateHessian);
    }
    let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&j| eig.eigenvalues[j] > rel_tol * lmax).collect();
    let mut w = DMatrix::zeros(b.nrows(), keep.len());
    for (c, &j) in keep.iter().enumerate() {
        w.set_column(c, &(eig.eigenvectors.column(j) / eig.eigenvalues[j].sqrt()));
    }
    let reduced = symmetrize(&(w.transpose() * symmetrize(a) * &w));
    Ok(reduced.symmetric_eigenvalues().max())
}

/// Numerical rank from singular values below `rel_tol * σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}
