//! Exact searchers: a full linear scan and a ball tree.

use std::sync::Arc;

use rand::Rng;

use crate::dataset::DataMatrix;
use crate::error::{arg, Result};
use crate::projection::{streams, RngStream};
use crate::query::{squared_distance, FallbackLevel, QueryResult, TopK};

pub const DEFAULT_LEAF_CAPACITY: usize = 40;

fn check_query(data: &DataMatrix, q: &[f32]) -> Result<()> {
    if q.len() != data.d() {
        return Err(arg(format!("query has {} dims, data has {}", q.len(), data.d())));
    }
    Ok(())
}

/// Scans every point (except `exclude`) and keeps the `k` closest.
pub fn exhaustive_knn(data: &DataMatrix, q: &[f32], k: usize, exclude: Option<usize>) -> Result<QueryResult> {
    check_query(data, q)?;
    let available = data.n() - usize::from(exclude.is_some_and(|e| e < data.n()));
    if k == 0 || k > available {
        return Err(arg(format!("k={k} must be in 1..={available}")));
    }
    let mut top = TopK::new(k);
    for (i, row) in data.rows().enumerate() {
        if Some(i) != exclude {
            top.push(squared_distance(q, row), i);
        }
    }
    Ok(top.into_result(available, FallbackLevel::None))
}

/// Exact search restricted to `candidates`.
pub(crate) fn scan_candidates(
    data: &DataMatrix,
    q: &[f32],
    k: usize,
    candidates: impl IntoIterator<Item = usize>,
    fallback: FallbackLevel,
) -> QueryResult {
    let mut top = TopK::new(k);
    let mut examined = 0;
    for i in candidates {
        top.push(squared_distance(q, data.row(i)), i);
        examined += 1;
    }
    top.into_result(examined, fallback)
}

#[derive(Clone, Debug, PartialEq)]
pub enum BallChildren {
    Leaf(Vec<usize>),
    Split { left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BallNode {
    pub center: Vec<f32>,
    pub radius: f64,
    pub children: BallChildren,
}

/// Metric tree whose nodes enclose their points in hyperspheres around the
/// point centroid. Node 0 is the root.
#[derive(Clone, Debug)]
pub struct BallTree {
    data: Arc<DataMatrix>,
    nodes: Vec<BallNode>,
    leaf_capacity: usize,
}

impl BallTree {
    /// Splits recursively using the farthest-point pivot pair: from a
    /// random start point take the farthest point as pivot one, then the
    /// point farthest from it as pivot two, and send each point to the
    /// nearer pivot (ties to pivot one). A node stops splitting at
    /// `leaf_capacity` points or when one side would be empty.
    pub fn build(data: impl Into<Arc<DataMatrix>>, leaf_capacity: usize, seed: u64) -> Result<Self> {
        let data = data.into();
        if leaf_capacity == 0 {
            return Err(arg("leaf_capacity must be at least 1"));
        }
        let mut rng = RngStream::new(seed, streams::BALL_TREE);
        let mut nodes: Vec<BallNode> = Vec::new();
        // (slot to fill, members)
        let mut pending = vec![(0usize, (0..data.n()).collect::<Vec<_>>())];
        nodes.push(placeholder());
        while let Some((slot, members)) = pending.pop() {
            let (center, radius) = enclosing_ball(&data, &members);
            let children = match split(&data, &members, leaf_capacity, &mut rng) {
                None => BallChildren::Leaf(members),
                Some((l, r)) => {
                    let left = nodes.len();
                    nodes.push(placeholder());
                    nodes.push(placeholder());
                    pending.push((left + 1, r));
                    pending.push((left, l));
                    BallChildren::Split { left, right: left + 1 }
                }
            };
            nodes[slot] = BallNode {
                center,
                radius,
                children,
            };
        }
        Ok(Self {
            data,
            nodes,
            leaf_capacity,
        })
    }

    pub fn nodes(&self) -> &[BallNode] {
        &self.nodes
    }

    pub fn leaf_capacity(&self) -> usize {
        self.leaf_capacity
    }

    pub fn data(&self) -> &Arc<DataMatrix> {
        &self.data
    }

    /// Members of every point under `node`.
    pub fn members(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(i) = stack.pop() {
            match &self.nodes[i].children {
                BallChildren::Leaf(m) => out.extend(m),
                BallChildren::Split { left, right } => {
                    stack.push(*right);
                    stack.push(*left);
                }
            }
        }
        out
    }

    /// Branch and bound over the tree; nearer child first. A subtree is
    /// skipped only when its ball lies strictly beyond the current k-th
    /// distance, so the result equals [`exhaustive_knn`] exactly.
    pub fn knn(&self, q: &[f32], k: usize) -> Result<QueryResult> {
        check_query(&self.data, q)?;
        if k == 0 || k > self.data.n() {
            return Err(arg(format!("k={k} must be in 1..={}", self.data.n())));
        }
        let mut top = TopK::new(k);
        let mut examined = 0usize;
        let root_gap = squared_distance(q, &self.nodes[0].center).sqrt() - self.nodes[0].radius;
        let mut stack = vec![(0usize, root_gap)];
        while let Some((node, gap)) = stack.pop() {
            if self.prunable(gap, &top) {
                continue;
            }
            match &self.nodes[node].children {
                BallChildren::Leaf(members) => {
                    for &i in members {
                        top.push(squared_distance(q, self.data.row(i)), i);
                    }
                    examined += members.len();
                }
                BallChildren::Split { left, right } => {
                    let dl = squared_distance(q, &self.nodes[*left].center).sqrt();
                    let dr = squared_distance(q, &self.nodes[*right].center).sqrt();
                    let gl = (*left, dl - self.nodes[*left].radius);
                    let gr = (*right, dr - self.nodes[*right].radius);
                    // stack: push the farther child first
                    if dl <= dr {
                        stack.push(gr);
                        stack.push(gl);
                    } else {
                        stack.push(gl);
                        stack.push(gr);
                    }
                }
            }
        }
        Ok(top.into_result(examined, FallbackLevel::None))
    }

    fn prunable(&self, gap: f64, top: &TopK) -> bool {
        if !top.is_full() {
            return false;
        }
        let kth = top.bound().sqrt();
        // slack absorbs rounding in the triangle-inequality bound
        gap - kth > 1e-9 * (gap.abs() + kth + 1.0)
    }
}

fn placeholder() -> BallNode {
    BallNode {
        center: Vec::new(),
        radius: 0.0,
        children: BallChildren::Leaf(Vec::new()),
    }
}

fn enclosing_ball(data: &DataMatrix, members: &[usize]) -> (Vec<f32>, f64) {
    let mut sum = vec![0.0f64; data.d()];
    for &i in members {
        for (s, &x) in sum.iter_mut().zip(data.row(i)) {
            *s += f64::from(x);
        }
    }
    let m = members.len().max(1) as f64;
    let center: Vec<f32> = sum.iter().map(|s| (s / m) as f32).collect();
    let radius = members
        .iter()
        .map(|&i| squared_distance(&center, data.row(i)))
        .fold(0.0f64, f64::max)
        .sqrt();
    (center, radius)
}

fn farthest(data: &DataMatrix, members: &[usize], from: usize) -> usize {
    let origin = data.row(from);
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for &i in members {
        let d = squared_distance(origin, data.row(i));
        if d > best.0 || (d == best.0 && i < best.1) {
            best = (d, i);
        }
    }
    best.1
}

fn split(
    data: &DataMatrix,
    members: &[usize],
    leaf_capacity: usize,
    rng: &mut RngStream,
) -> Option<(Vec<usize>, Vec<usize>)> {
    if members.len() <= leaf_capacity {
        return None;
    }
    let start = members[rng.random_range(0..members.len())];
    let p1 = farthest(data, members, start);
    let p2 = farthest(data, members, p1);
    let (a, b) = (data.row(p1), data.row(p2));
    let (left, right): (Vec<usize>, Vec<usize>) = members
        .iter()
        .partition(|&&i| squared_distance(data.row(i), a) <= squared_distance(data.row(i), b));
    if left.is_empty() || right.is_empty() {
        None
    } else {
        Some((left, right))
    }
}
