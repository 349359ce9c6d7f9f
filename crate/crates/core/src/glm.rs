//! Regularized generalized linear models
//! `f_i(θ) = φ_i(x_iᵀθ) + (λ/2)‖θ‖²` with closed-form derivative oracles.
//!
//! The regularizer is folded into every `f_i`, so each per-sample Hessian
//! carries `+λI`. Full-data reductions run sequentially in index order when
//! the objective is `deterministic`; otherwise they are split into fixed
//! chunks that are summed in parallel and combined in chunk order.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, Row};
use crate::error::{Error, Result};

pub const DEFAULT_DENSE_CAP: usize = 5000;

const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    /// `φ(z) = log(1 + exp(-y z))`
    Logistic,
    /// `φ(z) = (z - y)² / 2`
    Squared,
}

impl LinkKind {
    /// Supremum of `φ''`.
    pub fn curvature_sup(self) -> f64 {
        match self {
            LinkKind::Logistic => 0.25,
            LinkKind::Squared => 1.0,
        }
    }

    /// Bound on `|φ'''|`.
    pub fn third_derivative_bound(self) -> f64 {
        match self {
            LinkKind::Logistic => 1.0 / (6.0 * 3f64.sqrt()),
            LinkKind::Squared => 0.0,
        }
    }

    #[inline]
    pub fn phi(self, y: f64, z: f64) -> f64 {
        match self {
            LinkKind::Logistic => softplus(-y * z),
            LinkKind::Squared => 0.5 * (z - y) * (z - y),
        }
    }

    #[inline]
    pub fn dphi(self, y: f64, z: f64) -> f64 {
        match self {
            LinkKind::Logistic => -y * sigmoid(-y * z),
            LinkKind::Squared => z - y,
        }
    }

    #[inline]
    pub fn d2phi(self, y: f64, z: f64) -> f64 {
        match self {
            LinkKind::Logistic => {
                let m = y * z;
                sigmoid(m) * sigmoid(-m)
            }
            LinkKind::Squared => 1.0,
        }
    }
}

impl std::str::FromStr for LinkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(LinkKind::Logistic),
            "squared" | "ridge" => Ok(LinkKind::Squared),
            other => Err(Error::InvalidArgument(format!("unknown link `{other}`"))),
        }
    }
}

/// `log(1 + exp(t))` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Logistic sigmoid; the exponent is always non-positive.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub struct GlmObjective {
    data: Arc<Dataset>,
    link: LinkKind,
    lambda: f64,
    dense_cap: usize,
    deterministic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothness {
    /// Largest eigenvalue of the mean Hessian.
    pub l: f64,
    /// Lower bound on the strong convexity constant.
    pub mu_lower: f64,
}

impl GlmObjective {
    pub fn new(data: Arc<Dataset>, link: LinkKind, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if link == LinkKind::Logistic {
            if let Some((i, &y)) = data.labels().iter().enumerate().find(|(_, &y)| y != 1.0 && y != -1.0) {
                return Err(Error::BadLabel { index: i, label: y });
            }
        }
        Ok(GlmObjective { data, link, lambda, dense_cap: DEFAULT_DENSE_CAP, deterministic: false })
    }

    pub fn with_dense_cap(mut self, cap: usize) -> Self {
        self.dense_cap = cap;
        self
    }

    pub fn with_deterministic(mut self, deterministic: bool) -> Self {
        self.deterministic = deterministic;
        self
    }

    /// Same data and link with a different regularization weight.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let mut out = GlmObjective::new(self.data.clone(), self.link, lambda)?;
        out.dense_cap = self.dense_cap;
        out.deterministic = self.deterministic;
        Ok(out)
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn data_arc(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn link(&self) -> LinkKind {
        self.link
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dense_cap(&self) -> usize {
        self.dense_cap
    }

    pub fn n(&self) -> usize {
        self.data.n_samples()
    }

    pub fn d(&self) -> usize {
        self.data.n_features()
    }

    #[inline]
    pub fn row(&self, i: usize) -> Row<'_> {
        self.data.row(i)
    }

    #[inline]
    pub fn label(&self, i: usize) -> f64 {
        self.data.labels()[i]
    }

    /// `x_iᵀθ`
    #[inline]
    pub fn margin(&self, i: usize, theta: &[f64]) -> f64 {
        self.data.row(i).dot(theta)
    }

    #[inline]
    pub fn dphi(&self, i: usize, z: f64) -> f64 {
        self.link.dphi(self.label(i), z)
    }

    #[inline]
    pub fn d2phi(&self, i: usize, z: f64) -> f64 {
        self.link.d2phi(self.label(i), z)
    }

    fn check_dim(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: v.len() });
        }
        Ok(())
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(Error::IndexOutOfRange { index: i, n: self.n() });
        }
        Ok(())
    }

    /// Sum `per_sample(i)` over all samples into an accumulator of type `T`.
    fn reduce<T, F, G>(&self, zero: impl Fn() -> T + Sync, per_sample: F, combine: G) -> T
    where
        T: Send,
        F: Fn(&mut T, usize) + Sync,
        G: Fn(&mut T, T),
    {
        let n = self.n();
        if self.deterministic || n <= CHUNK {
            let mut acc = zero();
            for i in 0..n {
                per_sample(&mut acc, i);
            }
            return acc;
        }
        let partials: Vec<T> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut acc = zero();
                for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    per_sample(&mut acc, i);
                }
                acc
            })
            .collect();
        let mut it = partials.into_iter();
        let mut acc = it.next().expect("at least one chunk");
        for p in it {
            combine(&mut acc, p);
        }
        acc
    }

    /// `(1/N) Σ φ_i(x_iᵀθ) + (λ/2)‖θ‖²`
    pub fn value(&self, theta: &DVector<f64>) -> Result<f64> {
        self.check_dim(theta)?;
        let th = theta.as_slice();
        let total = self.reduce(
            || 0.0,
            |acc, i| *acc += self.link.phi(self.label(i), self.margin(i, th)),
            |acc, p| *acc += p,
        );
        Ok(total / self.n() as f64 + 0.5 * self.lambda * theta.norm_squared())
    }

    /// `f_i(θ)`
    pub fn value_sample(&self, i: usize, theta: &DVector<f64>) -> Result<f64> {
        self.check_index(i)?;
        self.check_dim(theta)?;
        let z = self.margin(i, theta.as_slice());
        Ok(self.link.phi(self.label(i), z) + 0.5 * self.lambda * theta.norm_squared())
    }

    /// `g_i(θ) = φ'_i(x_iᵀθ) x_i + λθ`
    pub fn grad_sample(&self, i: usize, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_index(i)?;
        self.check_dim(theta)?;
        let z = self.margin(i, theta.as_slice());
        let mut g = theta * self.lambda;
        self.row(i).axpy(self.dphi(i, z), g.as_mut_slice());
        Ok(g)
    }

    /// Mean of `grad_sample` over all samples (one datapass).
    pub fn grad_full(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(theta)?;
        let d = self.d();
        let th = theta.as_slice();
        let mut g = DVector::from_vec(self.reduce(
            || vec![0.0; d],
            |acc, i| {
                let z = self.margin(i, th);
                self.row(i).axpy(self.dphi(i, z), acc);
            },
            add_into,
        ));
        g /= self.n() as f64;
        g.axpy(self.lambda, theta, 1.0);
        Ok(g)
    }

    /// `H_i(θ̄) v = φ''_i(x_iᵀθ̄)(x_iᵀv) x_i + λv`
    pub fn hess_vec_sample(&self, i: usize, theta_bar: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_index(i)?;
        self.check_dim(theta_bar)?;
        self.check_dim(v)?;
        let mut out = DVector::zeros(self.d());
        let w = self.d2phi(i, self.margin(i, theta_bar.as_slice()));
        self.hess_vec_into(i, w, v.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// `out = w (x_iᵀv) x_i + λv`, with `w = φ''_i` already evaluated.
    #[inline]
    pub fn hess_vec_into(&self, i: usize, w: f64, v: &[f64], out: &mut [f64]) {
        for (o, &vj) in out.iter_mut().zip(v) {
            *o = self.lambda * vj;
        }
        let row = self.row(i);
        row.axpy(w * row.dot(v), out);
    }

    /// Mean Hessian-vector product `H(θ̄) v` (one datapass).
    pub fn hess_vec_full(&self, theta_bar: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(theta_bar)?;
        self.check_dim(v)?;
        let d = self.d();
        let (tb, vs) = (theta_bar.as_slice(), v.as_slice());
        let mut out = DVector::from_vec(self.reduce(
            || vec![0.0; d],
            |acc, i| {
                let row = self.row(i);
                let w = self.d2phi(i, row.dot(tb));
                row.axpy(w * row.dot(vs), acc);
            },
            add_into,
        ));
        out /= self.n() as f64;
        out.axpy(self.lambda, v, 1.0);
        Ok(out)
    }

    /// `φ''_i(x_iᵀθ̄) (x_i ⊙ x_i) + λ1`
    pub fn hess_diag_sample(&self, i: usize, theta_bar: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_index(i)?;
        self.check_dim(theta_bar)?;
        let w = self.d2phi(i, self.margin(i, theta_bar.as_slice()));
        let mut out = DVector::from_element(self.d(), self.lambda);
        let row = self.row(i);
        for (&j, &x) in row.indices.iter().zip(row.values) {
            out[j as usize] += w * x * x;
        }
        Ok(out)
    }

    /// `H_i(θ̄) S` column by column.
    pub fn hess_action_sample(&self, i: usize, theta_bar: &DVector<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_index(i)?;
        self.check_dim(theta_bar)?;
        if s.nrows() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: s.nrows() });
        }
        let w = self.d2phi(i, self.margin(i, theta_bar.as_slice()));
        let mut out = s * self.lambda;
        let row = self.row(i);
        let d = self.d();
        for c in 0..s.ncols() {
            let coef = w * row.dot(&s.as_slice()[c * d..(c + 1) * d]);
            row.axpy(coef, &mut out.as_mut_slice()[c * d..(c + 1) * d]);
        }
        Ok(out)
    }

    /// Mean Hessian action `A = (1/N) Σ H_j(θ̄) S` (one datapass, k
    /// gradient-equivalents per sample).
    pub fn hess_action_full(&self, theta_bar: &DVector<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(theta_bar)?;
        if s.nrows() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: s.nrows() });
        }
        let (d, k) = (self.d(), s.ncols());
        let (tb, sv) = (theta_bar.as_slice(), s.as_slice());
        let acc = self.reduce(
            || (vec![0.0; d * k], vec![0.0; k]),
            |(acc, proj), i| {
                let row = self.row(i);
                let w = self.d2phi(i, row.dot(tb));
                for c in 0..k {
                    proj[c] = w * row.dot(&sv[c * d..(c + 1) * d]);
                }
                for c in 0..k {
                    row.axpy(proj[c], &mut acc[c * d..(c + 1) * d]);
                }
            },
            |acc, p| add_into(&mut acc.0, p.0),
        );
        let mut a = DMatrix::from_vec(d, k, acc.0);
        a /= self.n() as f64;
        a += s * self.lambda;
        Ok(a)
    }

    /// Dense per-sample Hessian `φ''_i x_i x_iᵀ + λI` (small d only).
    pub fn hess_dense_sample(&self, i: usize, theta_bar: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_index(i)?;
        self.check_dim(theta_bar)?;
        self.check_cap()?;
        let w = self.d2phi(i, self.margin(i, theta_bar.as_slice()));
        let mut h = DMatrix::identity(self.d(), self.d()) * self.lambda;
        add_outer(&mut h, self.row(i), w);
        Ok(h)
    }

    /// Dense mean Hessian `(1/N) Σ φ''_i x_i x_iᵀ + λI`.
    pub fn hess_dense_full(&self, theta_bar: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(theta_bar)?;
        self.check_cap()?;
        let d = self.d();
        let tb = theta_bar.as_slice();
        let mut h = self.reduce(
            || DMatrix::zeros(d, d),
            |acc, i| {
                let row = self.row(i);
                add_outer(acc, row, self.d2phi(i, row.dot(tb)));
            },
            |acc, p| *acc += p,
        );
        h /= self.n() as f64;
        for j in 0..d {
            h[(j, j)] += self.lambda;
        }
        Ok(h)
    }

    fn check_cap(&self) -> Result<()> {
        if self.d() > self.dense_cap {
            return Err(Error::DenseCapExceeded { d: self.d(), cap: self.dense_cap });
        }
        Ok(())
    }

    /// `L` and a lower bound on `μ` for the mean Hessian at `theta`.
    ///
    /// Evaluated at `θ = 0` this gives global constants for both links, since
    /// logistic curvature peaks at margin zero. Uses a dense eigendecomposition
    /// below the dense cap and power iteration (relative tolerance 1e-8) above.
    pub fn smoothness_constants(&self, theta: &DVector<f64>) -> Result<Smoothness> {
        self.check_dim(theta)?;
        if self.d() <= self.dense_cap {
            let h = self.hess_dense_full(theta)?;
            let eig = h.symmetric_eigenvalues();
            let l = eig.max();
            let mu_lower = match self.link {
                LinkKind::Logistic => self.lambda,
                LinkKind::Squared => eig.min().max(self.lambda),
            };
            return Ok(Smoothness { l, mu_lower });
        }
        let l = self.power_iteration(theta, 1e-8, 10_000)?;
        Ok(Smoothness { l, mu_lower: self.lambda })
    }

    fn power_iteration(&self, theta: &DVector<f64>, tol: f64, max_iter: usize) -> Result<f64> {
        let d = self.d();
        let mut v = DVector::from_fn(d, |j, _| 1.0 + (j % 7) as f64 * 0.1);
        v /= v.norm();
        let mut est = 0.0;
        for _ in 0..max_iter {
            let hv = self.hess_vec_full(theta, &v)?;
            let next = v.dot(&hv);
            let norm = hv.norm();
            if norm == 0.0 {
                return Ok(0.0);
            }
            v = hv / norm;
            if (next - est).abs() <= tol * next.abs() {
                return Ok(next);
            }
            est = next;
        }
        Err(Error::NoConvergence { iterations: max_iter })
    }
}

#[allow(clippy::ptr_arg)]
fn add_into(acc: &mut Vec<f64>, other: Vec<f64>) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a += b;
    }
}

fn add_outer(h: &mut DMatrix<f64>, row: Row<'_>, w: f64) {
    for (&a, &xa) in row.indices.iter().zip(row.values) {
        for (&b, &xb) in row.indices.iter().zip(row.values) {
            h[(a as usize, b as usize)] += w * xa * xb;
        }
    }
}
