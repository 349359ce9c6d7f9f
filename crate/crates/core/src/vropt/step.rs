use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::GlmObjective;

use super::snapshot::{ModelScratch, Snapshot};

/// Euclidean ball constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Projection {
    pub fn new(center: &DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!("projection radius must be finite and >= 0, got {radius}")));
        }
        Ok(Projection { center: center.as_slice().to_vec(), radius })
    }

    pub fn project_in_place(&self, theta: &mut [f64]) {
        let dist_sq: f64 = theta.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        if dist_sq > self.radius * self.radius {
            let scale = self.radius / dist_sq.sqrt();
            for (a, c) in theta.iter_mut().zip(&self.center) {
                *a = c + scale * (*a - c);
            }
        }
    }
}

/// Allocation-free evaluation of `g_i(θ) − z_i(θ) + mean(θ)` for one snapshot.
#[derive(Debug)]
pub struct Stepper<'a> {
    obj: &'a GlmObjective,
    snap: &'a Snapshot,
    delta: Vec<f64>,
    buf: Vec<f64>,
    scratch: ModelScratch,
}

impl<'a> Stepper<'a> {
    pub fn new(obj: &'a GlmObjective, snap: &'a Snapshot) -> Result<Self> {
        if snap.d() != obj.d() {
            return Err(Error::DimensionMismatch { expected: obj.d(), got: snap.d() });
        }
        let d = obj.d();
        Ok(Stepper { obj, snap, delta: vec![0.0; d], buf: vec![0.0; d], scratch: ModelScratch::new(snap) })
    }

    pub fn snapshot(&self) -> &Snapshot {
        self.snap
    }

    /// Writes the step direction for sample `i` at `theta` into `out`.
    ///
    /// The two gradient evaluations share the row, so
    /// `g_i(θ) − g_i(θ̄) = (φ'_i(x_iᵀθ) − φ'_i(x_iᵀθ̄)) x_i + λ(θ − θ̄)`.
    pub fn direction_into(&mut self, i: usize, theta: &[f64], out: &mut [f64]) {
        let obj = self.obj;
        let snap = self.snap;
        for ((d, &t), &tb) in self.delta.iter_mut().zip(theta).zip(snap.theta_bar.iter()) {
            *d = t - tb;
        }
        snap.apply_mean_into(&self.delta, out, &mut self.scratch);
        for (o, &g) in out.iter_mut().zip(snap.g_bar.iter()) {
            *o += g;
        }
        let row = obj.row(i);
        let z_bar = row.dot(snap.theta_bar.as_slice());
        let z = row.dot(theta);
        let lambda = obj.lambda();
        row.axpy(obj.dphi(i, z) - obj.dphi(i, z_bar), out);
        snap.apply_sample_into(obj, i, obj.d2phi(i, z_bar), &self.delta, &mut self.buf, &mut self.scratch);
        for ((o, &h), &dj) in out.iter_mut().zip(&self.buf).zip(&self.delta) {
            *o += lambda * dj - h;
        }
    }
}

fn check_args(obj: &GlmObjective, snap: &Snapshot, i: usize, theta: &DVector<f64>) -> Result<()> {
    if i >= obj.n() {
        return Err(Error::IndexOutOfRange { index: i, n: obj.n() });
    }
    if theta.len() != obj.d() {
        return Err(Error::DimensionMismatch { expected: obj.d(), got: theta.len() });
    }
    if snap.d() != obj.d() {
        return Err(Error::DimensionMismatch { expected: obj.d(), got: snap.d() });
    }
    Ok(())
}

/// `z_i(θ) = g_i(θ̄) + Ĥ_i (θ − θ̄)`
pub fn control_variate(obj: &GlmObjective, snap: &Snapshot, i: usize, theta: &DVector<f64>) -> Result<DVector<f64>> {
    check_args(obj, snap, i, theta)?;
    let delta = theta - &snap.theta_bar;
    let mut out = DVector::zeros(obj.d());
    let w = obj.d2phi(i, obj.margin(i, snap.theta_bar.as_slice()));
    snap.apply_sample_into(obj, i, w, delta.as_slice(), out.as_mut_slice(), &mut ModelScratch::new(snap));
    Ok(out + obj.grad_sample(i, &snap.theta_bar)?)
}

/// `(1/N) Σ z_i(θ) = ḡ + M (θ − θ̄)`
pub fn control_variate_mean(obj: &GlmObjective, snap: &Snapshot, theta: &DVector<f64>) -> Result<DVector<f64>> {
    check_args(obj, snap, 0, theta)?;
    let delta = theta - &snap.theta_bar;
    let mut out = DVector::zeros(obj.d());
    snap.apply_mean_into(delta.as_slice(), out.as_mut_slice(), &mut ModelScratch::new(snap));
    Ok(out + &snap.g_bar)
}

/// Unbiased direction `g_i(θ) − z_i(θ) + (1/N) Σ z_j(θ)`.
pub fn step_direction(obj: &GlmObjective, snap: &Snapshot, i: usize, theta: &DVector<f64>) -> Result<DVector<f64>> {
    check_args(obj, snap, i, theta)?;
    let mut out = DVector::zeros(obj.d());
    Stepper::new(obj, snap)?.direction_into(i, theta.as_slice(), out.as_mut_slice());
    Ok(out)
}

/// One projected inner step `Π(θ − γ d_i)`.
pub fn inner_step(
    obj: &GlmObjective,
    snap: &Snapshot,
    theta: &DVector<f64>,
    i: usize,
    gamma: f64,
    projection: Option<&Projection>,
) -> Result<DVector<f64>> {
    let dir = step_direction(obj, snap, i, theta)?;
    let mut next = theta - dir * gamma;
    if let Some(p) = projection {
        p.project_in_place(next.as_mut_slice());
    }
    if next.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_onto_ball() {
        let p = Projection::new(&DVector::from_vec(vec![1.0, 0.0]), 1.0).unwrap();
        let mut x = [4.0, 4.0];
        p.project_in_place(&mut x);
        assert!((x[0] - 1.6).abs() < 1e-15 && (x[1] - 0.8).abs() < 1e-15);
        let mut inside = [1.5, 0.5];
        p.project_in_place(&mut inside);
        assert_eq!(inside, [1.5, 0.5]);
    }
}
