use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSource {
    Gaussian,
    PrevDirections,
}

/// The d x k embedding matrix `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBasis {
    pub s: DMatrix<f64>,
    pub source: BasisSource,
}

impl EmbeddingBasis {
    pub fn k(&self) -> usize {
        self.s.ncols()
    }

    pub fn d(&self) -> usize {
        self.s.nrows()
    }
}

fn check_rank(d: usize, k: usize) -> Result<()> {
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("rank k = {k} must satisfy 1 <= k <= d = {d}")));
    }
    Ok(())
}

/// Unscaled i.i.d. standard normal entries.
pub fn gaussian_basis(d: usize, k: usize, seed: u64) -> Result<EmbeddingBasis> {
    check_rank(d, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = DMatrix::from_fn(d, k, |_, _| rng.sample(StandardNormal));
    Ok(EmbeddingBasis { s, source: BasisSource::Gaussian })
}

/// Sizes of `k` contiguous blocks covering `t` items; the first `t mod k`
/// blocks take one extra element.
pub fn block_sizes(t: usize, k: usize) -> Vec<usize> {
    let (q, r) = (t / k, t % k);
    (0..k).map(|j| q + usize::from(j < r)).collect()
}

/// Columns are the means of `k` contiguous blocks of step directions.
pub fn prev_direction_basis(directions: &[DVector<f64>], k: usize) -> Result<EmbeddingBasis> {
    let d = directions.first().map(|v| v.len()).unwrap_or(0);
    let mut acc = DirectionBlocks::new(d, directions.len(), k)?;
    for v in directions {
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: v.len() });
        }
        acc.push(v.as_slice());
    }
    acc.finish()
}

/// Streaming form of [`prev_direction_basis`]: block sums are accumulated
/// as directions arrive so the T directions never need to be stored.
#[derive(Debug, Clone)]
pub struct DirectionBlocks {
    sizes: Vec<usize>,
    sums: DMatrix<f64>,
    block: usize,
    in_block: usize,
    seen: usize,
}

impl DirectionBlocks {
    pub fn new(d: usize, t: usize, k: usize) -> Result<Self> {
        if t < k {
            return Err(Error::TooFewDirections { available: t, k });
        }
        check_rank(d, k)?;
        Ok(DirectionBlocks { sizes: block_sizes(t, k), sums: DMatrix::zeros(d, k), block: 0, in_block: 0, seen: 0 })
    }

    pub fn push(&mut self, direction: &[f64]) {
        if self.block >= self.sizes.len() {
            return;
        }
        let d = self.sums.nrows();
        let col = &mut self.sums.as_mut_slice()[self.block * d..(self.block + 1) * d];
        for (c, &x) in col.iter_mut().zip(direction) {
            *c += x;
        }
        self.seen += 1;
        self.in_block += 1;
        if self.in_block == self.sizes[self.block] {
            self.block += 1;
            self.in_block = 0;
        }
    }

    pub fn finish(mut self) -> Result<EmbeddingBasis> {
        let k = self.sizes.len();
        if self.seen < k {
            return Err(Error::TooFewDirections { available: self.seen, k });
        }
        for (j, &size) in self.sizes.iter().enumerate() {
            self.sums.column_mut(j).scale_mut(1.0 / size as f64);
        }
        if self.sums.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(EmbeddingBasis { s: self.sums, source: BasisSource::PrevDirections })
    }
}
