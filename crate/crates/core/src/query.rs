//! Query results, the distance kernel and bounded top-k selection shared by
//! every searcher.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

/// How far an approximate query had to widen its candidate set to collect
/// `k` neighbors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackLevel {
    #[default]
    None,
    VoteRelaxed,
    UnionAll,
    Exhaustive,
}

/// Up to `k` neighbors sorted by ascending distance, ties by ascending id.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct QueryResult {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
    /// Exact distance evaluations performed.
    pub candidates_examined: usize,
    pub fallback_level: FallbackLevel,
}

impl QueryResult {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Squared Euclidean distance accumulated in `f64`, in a fixed lane order
/// so the result does not depend on who calls it.
#[inline]
pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    const LANES: usize = 8;
    let mut acc = [0.0f64; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            let t = f64::from(x[l]) - f64::from(y[l]);
            acc[l] += t * t;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let t = f64::from(*x) - f64::from(*y);
        tail += t * t;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Scored {
    pub(crate) dist2: f64,
    pub(crate) index: usize,
}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Scored {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scored {}

/// Keeps the `k` smallest `(dist2, index)` pairs seen so far.
#[derive(Debug)]
pub(crate) struct TopK {
    k: usize,
    heap: BinaryHeap<Scored>,
}

impl TopK {
    pub(crate) fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, dist2: f64, index: usize) {
        let s = Scored { dist2, index };
        if self.heap.len() < self.k {
            self.heap.push(s);
        } else if let Some(mut top) = self.heap.peek_mut() {
            if s < *top {
                *top = s;
            }
        }
    }

    pub(crate) fn is_full(&self) -> bool {
        self.heap.len() >= self.k
    }

    /// Current k-th smallest squared distance, or infinity while not full.
    pub(crate) fn bound(&self) -> f64 {
        if self.is_full() {
            self.heap.peek().map_or(f64::INFINITY, |s| s.dist2)
        } else {
            f64::INFINITY
        }
    }

    pub(crate) fn into_result(self, candidates_examined: usize, fallback_level: FallbackLevel) -> QueryResult {
        let sorted = self.heap.into_sorted_vec();
        QueryResult {
            indices: sorted.iter().map(|s| s.index).collect(),
            distances: sorted.iter().map(|s| s.dist2.sqrt()).collect(),
            candidates_examined,
            fallback_level,
        }
    }
}
