//! Reference implementations used as test oracles. They share no code with
//! the library's search paths beyond the data containers.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rpforest::{DataMatrix, FallbackLevel, MrptIndex, QueryResult};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DataMatrix {
    let values = (0..n * d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    DataMatrix::new(n, d, values).unwrap()
}

/// Coordinates on a 1/256 grid in [-4, 4], so squared distances are exact
/// in any summation order and ties are common.
pub fn grid_matrix(n: usize, d: usize, rng: &mut ChaCha8Rng) -> (DataMatrix, Vec<Vec<i64>>) {
    let ints: Vec<Vec<i64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1024i64..=1024)).collect())
        .collect();
    let values = ints.iter().flatten().map(|&v| v as f32 / 256.0).collect();
    (DataMatrix::new(n, d, values).unwrap(), ints)
}

/// Sorts every point by `(squared distance, index)` in exact integer
/// arithmetic and keeps the first `k`.
pub fn grid_oracle(points: &[Vec<i64>], q: &[i64], k: usize) -> Vec<(usize, i64)> {
    let mut all: Vec<(i64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
        .collect();
    all.sort();
    all.into_iter().take(k).map(|(d, i)| (i, d)).collect()
}

/// Naive sequential f64 squared distance.
pub fn naive_dist2(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let t = f64::from(*x) - f64::from(*y);
            t * t
        })
        .sum()
}

/// Full sort over `candidates` with the given distance, first `k` kept.
pub fn sort_select(
    data: &DataMatrix,
    q: &[f32],
    k: usize,
    candidates: impl IntoIterator<Item = usize>,
    dist2: impl Fn(&[f32], &[f32]) -> f64,
) -> Vec<(usize, f64)> {
    let mut all: Vec<(f64, usize)> = candidates.into_iter().map(|i| (dist2(q, data.row(i)), i)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(d, i)| (i, d.sqrt())).collect()
}

pub fn pairs(r: &QueryResult) -> Vec<(usize, f64)> {
    r.indices.iter().copied().zip(r.distances.iter().copied()).collect()
}

/// Independent forest query: own routing walk, own vote count, own
/// fallback ladder, full-sort selection.
pub fn forest_oracle(
    index: &MrptIndex,
    q: &[f32],
    k: usize,
    v: usize,
    l: usize,
) -> (Vec<(usize, f64)>, usize, FallbackLevel) {
    let data = index.data();
    let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
    for tree in index.trees() {
        let mut node = 0usize;
        for (level, vec) in tree.level_vectors()[..l].iter().enumerate() {
            let mut p = 0.0f64;
            for (&i, &w) in vec.indices().iter().zip(vec.weights()) {
                p += w * f64::from(q[i]);
            }
            let first = (1usize << level) - 1;
            let t = tree.thresholds()[node];
            let pos = node - first;
            node = (1usize << (level + 1)) - 1 + 2 * pos + usize::from(p >= t);
        }
        let pos = node + 1 - (1 << l);
        let span = 1 << (tree.depth() - l);
        for j in pos * span..(pos + 1) * span {
            for &p in tree.leaf(j) {
                *votes.entry(p as usize).or_default() += 1;
            }
        }
    }
    for t in (1..=v).rev() {
        let chosen: Vec<usize> = votes.iter().filter(|(_, &c)| c >= t).map(|(&p, _)| p).collect();
        if chosen.len() >= k {
            let level = if t == v {
                FallbackLevel::None
            } else if t == 1 {
                FallbackLevel::UnionAll
            } else {
                FallbackLevel::VoteRelaxed
            };
            let n = chosen.len();
            return (
                sort_select(data, q, k, chosen, rpforest::query::squared_distance),
                n,
                level,
            );
        }
    }
    (
        sort_select(data, q, k, 0..data.n(), rpforest::query::squared_distance),
        data.n(),
        FallbackLevel::Exhaustive,
    )
}
