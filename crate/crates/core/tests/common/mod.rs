#![allow(dead_code)]

use std::sync::Arc;

use cvtrack::dataio::Dataset;
use cvtrack::glm::{GlmObjective, LinkKind};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

/// Dense random GLM with `n` samples and `d` features.
pub fn random_objective(seed: u64, n: usize, d: usize, link: LinkKind, lambda: f64) -> GlmObjective {
    let mut r = rng(seed);
    let x = gaussian_matrix(&mut r, n, d) * 0.7;
    let y: Vec<f64> = match link {
        LinkKind::Logistic => (0..n).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect(),
        LinkKind::Squared => (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect(),
    };
    let ds = Dataset::from_dense(&x, y).unwrap();
    GlmObjective::new(Arc::new(ds), link, lambda).unwrap()
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.amax()
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn mat_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}
