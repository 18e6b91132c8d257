//! Sparse random projection directions and seeded random streams.

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{arg, Result};

/// Stream ids reserved for non-tree randomness. Tree `t` of a forest uses
/// stream `t`, so these sit in the upper half of the id space.
pub mod streams {
    const BASE: u64 = 1 << 63;
    pub const SYNTHETIC: u64 = BASE | 1;
    pub const FOLDS: u64 = BASE | 2;
    pub const VALIDATION: u64 = BASE | 3;
    pub const BALL_TREE: u64 = BASE | 4;
    pub const QUERIES: u64 = BASE | 5;
}

/// A counter-based random stream: `(seed, stream)` fixes the whole draw
/// sequence, and distinct stream ids never overlap.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// A direction in `R^dim` with `nnz` Gaussian entries.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseVector {
    /// Indices must be strictly increasing and `< dim`, weights finite and
    /// of the same length, and there must be at least one entry.
    pub fn new(dim: usize, indices: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if indices.is_empty() || indices.len() > dim {
            return Err(arg(format!(
                "sparse vector needs 1..={dim} entries, got {}",
                indices.len()
            )));
        }
        if indices.len() != weights.len() {
            return Err(arg("indices and weights differ in length"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) || indices[indices.len() - 1] >= dim {
            return Err(arg("indices must be strictly increasing and below dim"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(arg("weights must be finite"));
        }
        Ok(Self { dim, indices, weights })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Dot product with a point. Panics on a length mismatch; use
    /// [`project`] for the checked form.
    #[inline]
    pub fn dot(&self, point: &[f32]) -> f64 {
        assert_eq!(point.len(), self.dim, "point length differs from projection dim");
        self.indices
            .iter()
            .zip(&self.weights)
            .fold(0.0, |acc, (&i, &w)| acc + w * f64::from(point[i]))
    }
}

/// Default sparsity `1/sqrt(d)`.
pub fn default_sparsity(d: usize) -> f64 {
    1.0 / (d.max(1) as f64).sqrt()
}

/// Number of non-zeros for sparsity `a` in `d` dimensions.
pub fn nnz_for(d: usize, sparsity: f64) -> usize {
    ((sparsity * d as f64).round() as usize).clamp(1, d)
}

/// Draws `max(1, round(a d))` distinct coordinates uniformly, then one
/// standard normal weight per coordinate in ascending index order.
pub fn sample_sparse_vector(d: usize, sparsity: f64, rng: &mut RngStream) -> Result<SparseVector> {
    if d == 0 {
        return Err(arg("dimension must be at least 1"));
    }
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(arg(format!("sparsity must be in (0, 1], got {sparsity}")));
    }
    let nnz = nnz_for(d, sparsity);
    let mut indices = index::sample(rng, d, nnz).into_vec();
    indices.sort_unstable();
    let weights = (0..nnz).map(|_| rng.sample(StandardNormal)).collect();
    Ok(SparseVector {
        dim: d,
        indices,
        weights,
    })
}

/// `sum_j weights[j] * point[indices[j]]`, accumulated in index order.
pub fn project(point: &[f32], v: &SparseVector) -> Result<f64> {
    if point.len() != v.dim {
        return Err(arg(format!(
            "point has {} dims, projection expects {}",
            point.len(),
            v.dim
        )));
    }
    Ok(v.dot(point))
}
