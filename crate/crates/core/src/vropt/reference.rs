use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::GlmObjective;

pub const DEFAULT_REFERENCE_TOL: f64 = 1e-10;
pub const DEFAULT_PASS_CAP: f64 = 1e6;

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub theta_star: Vec<f64>,
    pub f_star: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub datapasses: f64,
}

impl ReferenceSolution {
    pub fn theta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.theta_star)
    }
}

/// Truncated conjugate gradient for `H p = −g`, stopped at relative residual
/// `forcing`. Returns the direction and the number of Hessian-vector products.
fn newton_cg(obj: &GlmObjective, theta: &DVector<f64>, g: &DVector<f64>, forcing: f64) -> Result<(DVector<f64>, usize)> {
    let d = obj.d();
    let mut p = DVector::zeros(d);
    let mut r = -g;
    let mut q = r.clone();
    let mut rr = r.norm_squared();
    let target = forcing * forcing * rr;
    let mut hvs = 0;
    for _ in 0..(2 * d).max(10) {
        if rr <= target {
            break;
        }
        let hq = obj.hess_vec_full(theta, &q)?;
        hvs += 1;
        let curv = q.dot(&hq);
        if !(curv > 0.0) {
            break;
        }
        let alpha = rr / curv;
        p.axpy(alpha, &q, 1.0);
        r.axpy(-alpha, &hq, 1.0);
        let rr_new = r.norm_squared();
        q = &r + &q * (rr_new / rr);
        rr = rr_new;
    }
    Ok((p, hvs))
}

/// Minimizer of `obj` to gradient norm `tol`.
///
/// Full-batch descent with a halving backtracking line search (sufficient
/// decrease 1e-4). Search directions are truncated Newton-CG steps, falling
/// back to the negative gradient when CG does not yield a descent direction.
/// Work is counted in datapasses (one per gradient, value or Hessian-vector
/// product) and capped at `pass_cap`.
pub fn reference_solution(obj: &GlmObjective, tol: f64, pass_cap: f64) -> Result<ReferenceSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let mut theta = DVector::zeros(obj.d());
    let mut f = obj.value(&theta)?;
    let mut g = obj.grad_full(&theta)?;
    let mut passes = 2.0;
    let mut iterations = 0;
    loop {
        let gnorm = g.norm();
        if !gnorm.is_finite() || !f.is_finite() {
            return Err(Error::NonFinite);
        }
        if gnorm <= tol {
            return Ok(ReferenceSolution {
                theta_star: theta.as_slice().to_vec(),
                f_star: f,
                grad_norm: gnorm,
                iterations,
                datapasses: passes,
            });
        }
        if passes > pass_cap {
            return Err(Error::IterationCap { passes, grad_norm: gnorm });
        }
        let (mut p, hvs) = newton_cg(obj, &theta, &g, gnorm.sqrt().min(0.5))?;
        passes += hvs as f64;
        let mut slope = g.dot(&p);
        if !(slope < 0.0) {
            p = -&g;
            slope = -gnorm * gnorm;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let cand = &theta + &p * t;
            let f_cand = obj.value(&cand)?;
            passes += 1.0;
            if f_cand <= f + ARMIJO * t * slope {
                theta = cand;
                f = f_cand;
                accepted = true;
                break;
            }
            // Near the optimum the decrease falls below the rounding error
            // of F; accept the step if it reduces the gradient norm instead.
            if f_cand <= f + 8.0 * f64::EPSILON * f.abs() {
                let g_cand = obj.grad_full(&cand)?;
                passes += 1.0;
                if g_cand.norm() < gnorm {
                    theta = cand;
                    f = f_cand;
                    g = g_cand;
                    iterations += 1;
                    accepted = true;
                    t = f64::NAN;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence { iterations });
        }
        if t.is_nan() {
            continue;
        }
        g = obj.grad_full(&theta)?;
        passes += 1.0;
        iterations += 1;
    }
}
