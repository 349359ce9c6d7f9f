//! Curvature-matching (CM) and action-matching (AM) low-rank models.
//!
//! Both are stored as the normalized pair `S̄ = S C`, `Ā = A C` with
//! `C = (SᵀA)^{†/2}` and `A = H S`. Per-sample corrections need one (CM) or
//! two (AM) Hessian-vector products with `H_i` plus O(dk) work; the exact mean
//! over samples is `Ā Āᵀ` for both.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::glm::GlmObjective;
use crate::linalg::{pinv_sqrt, symmetrize};

#[derive(Debug, Clone)]
pub struct NormalizedBasis {
    pub c: DMatrix<f64>,
    pub s_bar: DMatrix<f64>,
    pub a_bar: DMatrix<f64>,
    pub effective_rank: usize,
    /// Eigenvalues of `sym(SᵀA)`.
    pub spectrum: DVector<f64>,
}

/// Scratch buffers for allocation-free corrections.
#[derive(Debug, Clone)]
pub struct LowRankScratch {
    w: Vec<f64>,
    u: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    r: Vec<f64>,
}

impl LowRankScratch {
    pub fn new(d: usize, k: usize) -> Self {
        LowRankScratch { w: vec![0.0; k], u: vec![0.0; k], p: vec![0.0; d], q: vec![0.0; d], r: vec![0.0; d] }
    }
}

/// `out = Mᵀ v` for column-major `m` (d x k).
#[inline]
fn mt_v(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    let d = m.nrows();
    for (c, o) in out.iter_mut().enumerate() {
        let col = &m.as_slice()[c * d..(c + 1) * d];
        *o = col.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

/// `out (+)= M u`
#[inline]
fn m_u(m: &DMatrix<f64>, u: &[f64], out: &mut [f64], accumulate: bool) {
    let d = m.nrows();
    if !accumulate {
        out.fill(0.0);
    }
    for (c, &uc) in u.iter().enumerate() {
        if uc == 0.0 {
            continue;
        }
        let col = &m.as_slice()[c * d..(c + 1) * d];
        for (o, &x) in out.iter_mut().zip(col) {
            *o += uc * x;
        }
    }
}

/// `C = (sym(SᵀA))^{†/2}`, `S̄ = S C`, `Ā = A C`.
pub fn normalize_basis(a: &DMatrix<f64>, s: &DMatrix<f64>, rel_tol: f64) -> Result<NormalizedBasis> {
    if a.shape() != s.shape() {
        return Err(Error::InvalidArgument(format!(
            "A {:?} and S {:?} must have the same shape",
            a.shape(),
            s.shape()
        )));
    }
    let sta = symmetrize(&(s.transpose() * a));
    let p = pinv_sqrt(&sta, rel_tol)?;
    Ok(NormalizedBasis {
        s_bar: s * &p.matrix,
        a_bar: a * &p.matrix,
        c: p.matrix,
        effective_rank: p.effective_rank,
        spectrum: p.eigenvalues,
    })
}

impl NormalizedBasis {
    pub fn d(&self) -> usize {
        self.s_bar.nrows()
    }

    pub fn k(&self) -> usize {
        self.s_bar.ncols()
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: v.len() });
        }
        Ok(())
    }

    /// `out = Ā Āᵀ v`
    pub fn apply_mean_into(&self, v: &[f64], out: &mut [f64], scratch: &mut LowRankScratch) {
        mt_v(&self.a_bar, v, &mut scratch.w);
        m_u(&self.a_bar, &scratch.w, out, false);
    }

    /// `out = Ā S̄ᵀ H_i S̄ Āᵀ v`, where `curvature = φ''_i(x_iᵀθ̄)`.
    pub fn apply_cm_into(
        &self,
        obj: &GlmObjective,
        i: usize,
        curvature: f64,
        v: &[f64],
        out: &mut [f64],
        scratch: &mut LowRankScratch,
    ) {
        mt_v(&self.a_bar, v, &mut scratch.w);
        m_u(&self.s_bar, &scratch.w, &mut scratch.p, false);
        obj.hess_vec_into(i, curvature, &scratch.p, &mut scratch.q);
        mt_v(&self.s_bar, &scratch.q, &mut scratch.u);
        m_u(&self.a_bar, &scratch.u, out, false);
    }

    /// `out = Ā S̄ᵀ H_i (I − S̄Āᵀ) v + H_i S̄ Āᵀ v`
    pub fn apply_am_into(
        &self,
        obj: &GlmObjective,
        i: usize,
        curvature: f64,
        v: &[f64],
        out: &mut [f64],
        scratch: &mut LowRankScratch,
    ) {
        mt_v(&self.a_bar, v, &mut scratch.w);
        m_u(&self.s_bar, &scratch.w, &mut scratch.p, false);
        for ((r, &vj), &pj) in scratch.r.iter_mut().zip(v).zip(&scratch.p) {
            *r = vj - pj;
        }
        obj.hess_vec_into(i, curvature, &scratch.r, &mut scratch.q);
        mt_v(&self.s_bar, &scratch.q, &mut scratch.u);
        obj.hess_vec_into(i, curvature, &scratch.p, out);
        m_u(&self.a_bar, &scratch.u, out, true);
    }

    /// Dense mean operator `Ā Āᵀ`.
    pub fn dense_mean(&self) -> DMatrix<f64> {
        &self.a_bar * self.a_bar.transpose()
    }
}

fn curvature_at(obj: &GlmObjective, i: usize, theta_bar: &DVector<f64>) -> Result<f64> {
    if i >= obj.n() {
        return Err(Error::IndexOutOfRange { index: i, n: obj.n() });
    }
    if theta_bar.len() != obj.d() {
        return Err(Error::DimensionMismatch { expected: obj.d(), got: theta_bar.len() });
    }
    Ok(obj.d2phi(i, obj.margin(i, theta_bar.as_slice())))
}

/// CM correction `Ĥ_i v`.
pub fn cm_correct(
    obj: &GlmObjective,
    i: usize,
    theta_bar: &DVector<f64>,
    nb: &NormalizedBasis,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    nb.check(v.as_slice())?;
    let w = curvature_at(obj, i, theta_bar)?;
    let mut out = DVector::zeros(nb.d());
    nb.apply_cm_into(obj, i, w, v.as_slice(), out.as_mut_slice(), &mut LowRankScratch::new(nb.d(), nb.k()));
    Ok(out)
}

/// AM correction `Ĥ_i v`.
pub fn am_correct(
    obj: &GlmObjective,
    i: usize,
    theta_bar: &DVector<f64>,
    nb: &NormalizedBasis,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    nb.check(v.as_slice())?;
    let w = curvature_at(obj, i, theta_bar)?;
    let mut out = DVector::zeros(nb.d());
    nb.apply_am_into(obj, i, w, v.as_slice(), out.as_mut_slice(), &mut LowRankScratch::new(nb.d(), nb.k()));
    Ok(out)
}

/// Exact mean of [`cm_correct`] over samples: `Ā Āᵀ v`.
pub fn cm_mean_correct(nb: &NormalizedBasis, v: &DVector<f64>) -> Result<DVector<f64>> {
    nb.check(v.as_slice())?;
    let mut out = DVector::zeros(nb.d());
    nb.apply_mean_into(v.as_slice(), out.as_mut_slice(), &mut LowRankScratch::new(nb.d(), nb.k()));
    Ok(out)
}

/// Exact mean of [`am_correct`] over samples; the same operator as CM.
pub fn am_mean_correct(nb: &NormalizedBasis, v: &DVector<f64>) -> Result<DVector<f64>> {
    cm_mean_correct(nb, v)
}
