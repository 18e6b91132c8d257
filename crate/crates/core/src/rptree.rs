//! Median-split sparse random projection trees.
//!
//! All nodes on one level share a projection vector, so a query costs one
//! sparse dot product per level. The tree is complete and stored flat:
//! split thresholds in heap order (children of node `i` are `2i+1` and
//! `2i+2`), and leaf buckets laid out left to right in one array so that
//! the points under any internal node form a contiguous slice.

use crate::dataset::DataMatrix;
use crate::error::{arg, Error, Result};
use crate::projection::{sample_sparse_vector, RngStream, SparseVector};

#[derive(Clone, Debug, PartialEq)]
pub struct RpTree {
    depth: usize,
    dim: usize,
    level_vectors: Vec<SparseVector>,
    thresholds: Vec<f64>,
    /// `2^depth + 1` offsets into `leaf_points`.
    leaf_offsets: Vec<usize>,
    /// Point ids grouped by leaf, ascending within each leaf.
    leaf_points: Vec<u32>,
}

/// Largest depth whose `2^depth` leaves can all be non-empty for `n` points.
pub fn max_depth(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        n.ilog2() as usize
    }
}

pub(crate) fn check_depth(depth: usize, n: usize) -> Result<()> {
    if depth >= usize::BITS as usize - 1 || (1usize << depth) > n {
        return Err(arg(format!(
            "depth {depth} needs at least 2^{depth} points but n={n}; maximum depth is {}",
            max_depth(n)
        )));
    }
    Ok(())
}

/// Samples one projection vector per level and builds the tree.
pub fn build_tree(data: &DataMatrix, depth: usize, sparsity: f64, rng: &mut RngStream) -> Result<RpTree> {
    check_depth(depth, data.n())?;
    let vectors = (0..depth)
        .map(|_| sample_sparse_vector(data.d(), sparsity, rng))
        .collect::<Result<Vec<_>>>()?;
    RpTree::from_level_vectors(data, vectors)
}

impl RpTree {
    /// Builds a tree of depth `level_vectors.len()` using the given
    /// projection for each level.
    ///
    /// Each node's points are ordered by projection (ties by point id) and
    /// the first `ceil(m/2)` go left. The stored threshold lies in the gap
    /// between the two halves, so every left point projects strictly below
    /// it and every right point at or above it, unless the boundary
    /// projections are tied.
    pub fn from_level_vectors(data: &DataMatrix, level_vectors: Vec<SparseVector>) -> Result<Self> {
        let depth = level_vectors.len();
        check_depth(depth, data.n())?;
        if let Some(v) = level_vectors.iter().find(|v| v.dim() != data.d()) {
            return Err(arg(format!(
                "projection dim {} differs from data dim {}",
                v.dim(),
                data.d()
            )));
        }
        let n = data.n();
        if n > u32::MAX as usize {
            return Err(arg("at most 2^32 - 1 points can be indexed"));
        }
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut bounds = vec![0, n];
        let mut thresholds = Vec::with_capacity((1 << depth) - 1);
        let mut proj = vec![0.0f64; n];

        for v in &level_vectors {
            for (i, p) in proj.iter_mut().enumerate() {
                *p = v.dot(data.row(i));
            }
            let mut next = Vec::with_capacity(bounds.len() * 2 - 1);
            next.push(0);
            for w in bounds.windows(2) {
                let node = &mut order[w[0]..w[1]];
                node.sort_unstable_by(|&a, &b| proj[a as usize].total_cmp(&proj[b as usize]).then(a.cmp(&b)));
                let left = node.len().div_ceil(2);
                let lo = proj[node[left - 1] as usize];
                let hi = proj[node[left] as usize];
                thresholds.push(split_point(lo, hi));
                next.push(w[0] + left);
                next.push(w[1]);
            }
            bounds = next;
        }
        for w in bounds.windows(2) {
            order[w[0]..w[1]].sort_unstable();
        }
        Ok(Self {
            depth,
            dim: data.d(),
            level_vectors,
            thresholds,
            leaf_offsets: bounds,
            leaf_points: order,
        })
    }

    /// Reassembles a tree from stored parts, validating the layout.
    pub fn from_parts(
        n: usize,
        dim: usize,
        level_vectors: Vec<SparseVector>,
        thresholds: Vec<f64>,
        buckets: Vec<Vec<u32>>,
    ) -> Result<Self> {
        let depth = level_vectors.len();
        check_depth(depth, n).map_err(|e| Error::Format(e.to_string()))?;
        if thresholds.len() != (1 << depth) - 1 || buckets.len() != 1 << depth {
            return Err(Error::Format(format!(
                "depth {depth} tree needs {} thresholds and {} buckets",
                (1usize << depth) - 1,
                1usize << depth
            )));
        }
        if level_vectors.iter().any(|v| v.dim() != dim) {
            return Err(Error::Format("projection dim differs from data dim".into()));
        }
        if thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::Format("non-finite split threshold".into()));
        }
        let mut seen = vec![false; n];
        let mut leaf_offsets = Vec::with_capacity(buckets.len() + 1);
        let mut leaf_points = Vec::with_capacity(n);
        leaf_offsets.push(0);
        for bucket in buckets {
            for &p in &bucket {
                match seen.get_mut(p as usize) {
                    Some(s) if !*s => *s = true,
                    _ => return Err(Error::Format(format!("bucket entry {p} invalid or repeated"))),
                }
            }
            leaf_points.extend(bucket);
            leaf_offsets.push(leaf_points.len());
        }
        if leaf_points.len() != n {
            return Err(Error::Format("leaf buckets do not cover every point".into()));
        }
        Ok(Self {
            depth,
            dim,
            level_vectors,
            thresholds,
            leaf_offsets,
            leaf_points,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n(&self) -> usize {
        self.leaf_points.len()
    }

    pub fn level_vectors(&self) -> &[SparseVector] {
        &self.level_vectors
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn leaf_count(&self) -> usize {
        1 << self.depth
    }

    pub fn leaf(&self, j: usize) -> &[u32] {
        &self.leaf_points[self.leaf_offsets[j]..self.leaf_offsets[j + 1]]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &[u32]> + '_ {
        (0..self.leaf_count()).map(|j| self.leaf(j))
    }

    /// Position (0-based, left to right) of the node reached after
    /// `stop_depth` routing steps.
    pub fn route(&self, q: &[f32], stop_depth: usize) -> usize {
        let mut node = 0usize;
        for v in &self.level_vectors[..stop_depth] {
            let p = v.dot(q);
            node = if p < self.thresholds[node] {
                2 * node + 1
            } else {
                2 * node + 2
            };
        }
        node + 1 - (1 << stop_depth)
    }

    /// Points under the node at `depth` with left-to-right position `pos`.
    pub fn subtree_points(&self, depth: usize, pos: usize) -> &[u32] {
        let span = 1 << (self.depth - depth);
        &self.leaf_points[self.leaf_offsets[pos * span]..self.leaf_offsets[(pos + 1) * span]]
    }

    /// Routes `q` for `stop_depth` levels (`< threshold` goes left) and
    /// returns every indexed point beneath the reached node.
    pub fn query_leaf(&self, q: &[f32], stop_depth: usize) -> Result<&[u32]> {
        if q.len() != self.dim() {
            return Err(arg(format!("query has {} dims, tree expects {}", q.len(), self.dim())));
        }
        if stop_depth > self.depth {
            return Err(arg(format!(
                "stop depth {stop_depth} exceeds tree depth {}",
                self.depth
            )));
        }
        Ok(self.subtree_points(stop_depth, self.route(q, stop_depth)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// A value `t` with `lo < t <= hi` when `lo < hi`, else `hi`.
fn split_point(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) * 0.5;
    if mid > lo {
        mid
    } else {
        hi
    }
}
