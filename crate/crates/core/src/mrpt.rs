//! Forests of random projection trees with vote-based candidate selection
//! and exact re-ranking, plus recall-targeted tuning of the forest size,
//! search depth and vote threshold.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::index;
use serde::Serialize;

use crate::dataset::{ByteReader, DataMatrix, Fnv1a};
use crate::error::{arg, io_err, Error, Result};
use crate::exact::{exhaustive_knn, scan_candidates};
use crate::parallel::map_range;
use crate::projection::{default_sparsity, nnz_for, streams, RngStream, SparseVector};
use crate::query::{FallbackLevel, QueryResult};
use crate::rptree::{build_tree, check_depth, max_depth, RpTree};

const INDEX_MAGIC: &[u8; 4] = b"ANNI";

/// Forest size used when no tuning is requested.
pub const DEFAULT_TREES: usize = 32;

/// Depth giving leaves of roughly `max(4k, 100)` points, at least 1 and
/// never deeper than `n` allows.
pub fn default_depth(n: usize, k: usize) -> usize {
    let leaf = (4 * k).max(100) as f64;
    let l = (n as f64 / leaf).log2().floor();
    let l = if l.is_finite() && l >= 1.0 { l as usize } else { 1 };
    l.min(max_depth(n))
}

/// Deepest tuning depth considered by default: leaves of at least `2k`
/// points.
pub fn default_max_depth(n: usize, k: usize) -> usize {
    let l = (n as f64 / (2 * k.max(1)) as f64).log2().floor();
    let l = if l.is_finite() && l >= 1.0 { l as usize } else { 1 };
    l.min(max_depth(n))
}

#[derive(Clone, Debug)]
pub struct MrptIndex {
    data: Arc<DataMatrix>,
    trees: Vec<RpTree>,
    depth: usize,
    sparsity: f64,
    seed: u64,
    depth_in_use: usize,
    vote_threshold: usize,
    exhaustive: bool,
}

impl PartialEq for MrptIndex {
    fn eq(&self, other: &Self) -> bool {
        *self.data == *other.data
            && self.trees == other.trees
            && self.depth == other.depth
            && self.sparsity.to_bits() == other.sparsity.to_bits()
            && self.seed == other.seed
            && self.depth_in_use == other.depth_in_use
            && self.vote_threshold == other.vote_threshold
            && self.exhaustive == other.exhaustive
    }
}

/// Builds `trees` trees of depth `depth`; tree `t` draws from stream
/// `(seed, t)` so the result does not depend on build parallelism.
pub fn build_index(data: Arc<DataMatrix>, trees: usize, depth: usize, sparsity: f64, seed: u64) -> Result<MrptIndex> {
    if trees == 0 {
        return Err(arg("forest needs at least one tree"));
    }
    check_depth(depth, data.n())?;
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(arg(format!("sparsity must be in (0, 1], got {sparsity}")));
    }
    let built = map_range(trees, |t| {
        build_tree(&data, depth, sparsity, &mut RngStream::new(seed, t as u64))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(MrptIndex {
        data,
        trees: built,
        depth,
        sparsity,
        seed,
        depth_in_use: depth,
        vote_threshold: 1,
        exhaustive: false,
    })
}

impl MrptIndex {
    /// An index that answers every query with a full scan.
    pub fn exhaustive(data: Arc<DataMatrix>, seed: u64) -> Self {
        let sparsity = default_sparsity(data.d());
        Self {
            data,
            trees: Vec::new(),
            depth: 0,
            sparsity,
            seed,
            depth_in_use: 0,
            vote_threshold: 1,
            exhaustive: true,
        }
    }

    /// Wraps prebuilt trees, which must all index `data` at one depth.
    pub fn from_trees(data: Arc<DataMatrix>, trees: Vec<RpTree>, sparsity: f64, seed: u64) -> Result<Self> {
        let depth = trees
            .first()
            .ok_or_else(|| arg("forest needs at least one tree"))?
            .depth();
        if trees
            .iter()
            .any(|t| t.depth() != depth || t.n() != data.n() || t.dim() != data.d())
        {
            return Err(arg("trees must share the data shape and depth"));
        }
        Ok(Self {
            data,
            trees,
            depth,
            sparsity,
            seed,
            depth_in_use: depth,
            vote_threshold: 1,
            exhaustive: false,
        })
    }

    pub fn data(&self) -> &Arc<DataMatrix> {
        &self.data
    }

    pub fn trees(&self) -> &[RpTree] {
        &self.trees
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn depth_in_use(&self) -> usize {
        self.depth_in_use
    }

    pub fn vote_threshold(&self) -> usize {
        self.vote_threshold
    }

    pub fn sparsity(&self) -> f64 {
        self.sparsity
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_exhaustive(&self) -> bool {
        self.exhaustive
    }

    /// Sets the defaults used by [`MrptIndex::query`].
    pub fn configure(&mut self, vote_threshold: usize, depth_in_use: usize) -> Result<()> {
        self.check_vote(vote_threshold)?;
        self.check_depth_in_use(depth_in_use)?;
        self.vote_threshold = vote_threshold;
        self.depth_in_use = depth_in_use;
        Ok(())
    }

    /// Keeps only the first `trees` trees.
    pub fn truncate_trees(&mut self, trees: usize) -> Result<()> {
        if trees == 0 || trees > self.trees.len() {
            return Err(arg(format!("cannot keep {trees} of {} trees", self.trees.len())));
        }
        self.trees.truncate(trees);
        self.vote_threshold = self.vote_threshold.min(trees);
        Ok(())
    }

    fn check_vote(&self, v: usize) -> Result<()> {
        if self.exhaustive {
            return Ok(());
        }
        if v == 0 || v > self.trees.len() {
            return Err(arg(format!("vote threshold {v} must be in 1..={}", self.trees.len())));
        }
        Ok(())
    }

    fn check_depth_in_use(&self, l: usize) -> Result<()> {
        if l > self.depth {
            return Err(arg(format!("depth {l} exceeds built depth {}", self.depth)));
        }
        Ok(())
    }

    fn check_query(&self, q: &[f32]) -> Result<()> {
        if q.len() != self.data.d() {
            return Err(arg(format!("query has {} dims, index has {}", q.len(), self.data.d())));
        }
        Ok(())
    }

    /// Per-point vote counts over all trees at depth `l_use`; returns the
    /// touched points and their counts (parallel vectors, touch order).
    fn votes(&self, q: &[f32], l_use: usize) -> (Vec<usize>, Vec<u32>) {
        let mut counts = vec![0u32; self.data.n()];
        let mut touched = Vec::new();
        for tree in &self.trees {
            for &p in tree.subtree_points(l_use, tree.route(q, l_use)) {
                let c = &mut counts[p as usize];
                if *c == 0 {
                    touched.push(p as usize);
                }
                *c += 1;
            }
        }
        let tally = touched.iter().map(|&p| counts[p]).collect();
        (touched, tally)
    }

    /// Points found in at least `v` of the trees' query leaves at depth
    /// `l_use`, ascending.
    pub fn candidates(&self, q: &[f32], v: usize, l_use: usize) -> Result<Vec<usize>> {
        self.check_query(q)?;
        if self.exhaustive {
            return Ok((0..self.data.n()).collect());
        }
        self.check_vote(v)?;
        self.check_depth_in_use(l_use)?;
        let (touched, tally) = self.votes(q, l_use);
        Ok(at_least(&touched, &tally, v as u32))
    }

    /// Approximate k-NN with the configured depth.
    pub fn approx_knn(&self, q: &[f32], k: usize, v: usize) -> Result<QueryResult> {
        self.approx_knn_at(q, k, v, self.depth_in_use)
    }

    /// Approximate k-NN with the configured vote threshold and depth.
    pub fn query(&self, q: &[f32], k: usize) -> Result<QueryResult> {
        self.approx_knn_at(q, k, self.vote_threshold, self.depth_in_use)
    }

    /// Exact distances over the vote-filtered candidates. When fewer than
    /// `k` survive, the threshold is lowered step by step, then the union
    /// of all leaves is used, and finally every point is scanned; the step
    /// taken is reported in `fallback_level`.
    pub fn approx_knn_at(&self, q: &[f32], k: usize, v: usize, l_use: usize) -> Result<QueryResult> {
        self.check_query(q)?;
        let n = self.data.n();
        if k == 0 || k > n {
            return Err(arg(format!("k={k} must be in 1..={n}")));
        }
        if self.exhaustive {
            return exhaustive_knn(&self.data, q, k, None);
        }
        self.check_vote(v)?;
        self.check_depth_in_use(l_use)?;
        let (touched, tally) = self.votes(q, l_use);
        for threshold in (1..=v).rev() {
            let chosen = at_least(&touched, &tally, threshold as u32);
            if chosen.len() >= k {
                let level = match threshold {
                    t if t == v => FallbackLevel::None,
                    1 => FallbackLevel::UnionAll,
                    _ => FallbackLevel::VoteRelaxed,
                };
                return Ok(scan_candidates(&self.data, q, k, chosen, level));
            }
        }
        Ok(scan_candidates(&self.data, q, k, 0..n, FallbackLevel::Exhaustive))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(io_err(path))
    }

    /// Serializes to the ANNI layout followed by a configuration trailer
    /// and an FNV-1a checksum of everything before it.
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(INDEX_MAGIC);
        buf.extend_from_slice(&1u32.to_le_bytes());
        for x in [
            self.seed,
            self.trees.len() as u64,
            self.depth as u64,
            self.data.d() as u64,
            self.data.n() as u64,
            self.data.checksum(),
        ] {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        for tree in &self.trees {
            for v in tree.level_vectors() {
                buf.extend_from_slice(&(v.nnz() as u64).to_le_bytes());
                for &i in v.indices() {
                    buf.extend_from_slice(&(i as u64).to_le_bytes());
                }
                for w in v.weights() {
                    buf.extend_from_slice(&w.to_le_bytes());
                }
            }
            for t in tree.thresholds() {
                buf.extend_from_slice(&t.to_le_bytes());
            }
            for leaf in tree.leaves() {
                buf.extend_from_slice(&(leaf.len() as u64).to_le_bytes());
                for &p in leaf {
                    buf.extend_from_slice(&u64::from(p).to_le_bytes());
                }
            }
        }
        buf.extend_from_slice(&(self.depth_in_use as u64).to_le_bytes());
        buf.extend_from_slice(&(self.vote_threshold as u64).to_le_bytes());
        buf.extend_from_slice(&u64::from(self.exhaustive).to_le_bytes());
        buf.extend_from_slice(&self.sparsity.to_le_bytes());
        let mut h = Fnv1a::new();
        h.write(&buf);
        buf.extend_from_slice(&h.finish().to_le_bytes());
        buf
    }

    pub fn load(path: &Path, data: Arc<DataMatrix>) -> Result<Self> {
        Self::decode(&fs::read(path).map_err(io_err(path))?, data)
    }

    /// Restores an index over `data`, which must be the matrix it was
    /// built from (same shape and payload checksum).
    pub fn decode(bytes: &[u8], data: Arc<DataMatrix>) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(INDEX_MAGIC)?;
        r.version()?;
        if bytes.len() < 8 + 48 + 8 {
            return Err(Error::Truncated {
                required: 64,
                available: bytes.len() as u64,
            });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let mut h = Fnv1a::new();
        h.write(body);
        if h.finish() != u64::from_le_bytes(tail.try_into().unwrap()) {
            return Err(Error::Integrity("index file checksum mismatch".into()));
        }
        let seed = r.u64()?;
        let tree_count = r.u64()? as usize;
        let depth = r.u64()? as usize;
        let d = r.u64()? as usize;
        let n = r.u64()? as usize;
        let checksum = r.u64()?;
        if (n, d) != (data.n(), data.d()) {
            return Err(Error::Integrity(format!(
                "index built for {n}x{d} data, got {}x{}",
                data.n(),
                data.d()
            )));
        }
        if checksum != data.checksum() {
            return Err(Error::Integrity("data checksum mismatch".into()));
        }
        check_depth(depth, n).map_err(|e| Error::Format(e.to_string()))?;
        let mut trees = Vec::with_capacity(tree_count.min(1 << 16));
        for _ in 0..tree_count {
            let mut vectors = Vec::with_capacity(depth);
            for _ in 0..depth {
                let nnz = r.u64()? as usize;
                if nnz > d {
                    return Err(Error::Format(format!("sparse vector with {nnz} > {d} entries")));
                }
                let indices = (0..nnz)
                    .map(|_| r.u64().map(|i| i as usize))
                    .collect::<Result<Vec<_>>>()?;
                let weights = (0..nnz).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                vectors.push(SparseVector::new(d, indices, weights).map_err(|e| Error::Format(e.to_string()))?);
            }
            let thresholds = (0..(1usize << depth) - 1)
                .map(|_| r.f64())
                .collect::<Result<Vec<_>>>()?;
            let mut buckets = Vec::with_capacity(1 << depth);
            for _ in 0..1usize << depth {
                let count = r.u64()? as usize;
                if count > n {
                    return Err(Error::Format(format!("bucket of {count} > n points")));
                }
                let bucket = (0..count)
                    .map(|_| {
                        r.u64().and_then(|p| {
                            u32::try_from(p).map_err(|_| Error::Format(format!("bucket entry {p} too large")))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                buckets.push(bucket);
            }
            trees.push(RpTree::from_parts(n, d, vectors, thresholds, buckets)?);
        }
        let depth_in_use = r.u64()? as usize;
        let vote_threshold = r.u64()? as usize;
        let exhaustive = match r.u64()? {
            0 => false,
            1 => true,
            m => return Err(Error::Format(format!("unknown search mode {m}"))),
        };
        let sparsity = r.f64()?;
        if r.position() != body.len() {
            return Err(Error::Format("unexpected bytes after index trailer".into()));
        }
        let index = Self {
            data,
            trees,
            depth,
            sparsity,
            seed,
            depth_in_use,
            vote_threshold,
            exhaustive,
        };
        if !exhaustive && index.trees.is_empty() {
            return Err(Error::Format("forest index without trees".into()));
        }
        index
            .check_vote(vote_threshold)
            .and_then(|_| index.check_depth_in_use(depth_in_use))
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok(index)
    }
}

fn at_least(touched: &[usize], tally: &[u32], v: u32) -> Vec<usize> {
    let mut out: Vec<usize> = touched
        .iter()
        .zip(tally)
        .filter(|(_, &c)| c >= v)
        .map(|(&p, _)| p)
        .collect();
    out.sort_unstable();
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct AutoTuneConfig {
    pub target_recall: f64,
    pub k: usize,
    pub max_trees: usize,
    pub max_depth: usize,
    pub validation_queries: usize,
    /// `None` means `1/sqrt(d)`.
    pub sparsity: Option<f64>,
    pub seed: u64,
}

impl AutoTuneConfig {
    /// Defaults sized for `n` points: 32 trees, depth down to leaves of
    /// about `2k` points, and up to 200 validation queries.
    pub fn for_size(n: usize, k: usize, target_recall: f64, seed: u64) -> Self {
        Self {
            target_recall,
            k,
            max_trees: DEFAULT_TREES,
            max_depth: default_max_depth(n, k),
            validation_queries: n.min(200),
            sparsity: None,
            seed,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.target_recall > 0.0 && self.target_recall <= 1.0) {
            return Err(arg(format!(
                "target recall must be in (0, 1], got {}",
                self.target_recall
            )));
        }
        if self.k == 0 || self.max_trees == 0 || self.validation_queries == 0 {
            return Err(arg("k, max_trees and validation_queries must be at least 1"));
        }
        if self.k >= n {
            return Err(arg(format!("k={} needs more than k points, n={n}", self.k)));
        }
        if self.validation_queries > n {
            return Err(arg(format!(
                "{} validation queries exceed n={n}",
                self.validation_queries
            )));
        }
        if self.max_depth == 0 {
            return Err(arg("max_depth must be at least 1"));
        }
        check_depth(self.max_depth, n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TunedChoice {
    Forest {
        trees: usize,
        depth: usize,
        vote_threshold: usize,
    },
    Exhaustive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridEntry {
    pub trees: usize,
    pub depth: usize,
    pub vote_threshold: usize,
    pub recall: f64,
    pub mean_candidates: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AutoTuneResult {
    pub chosen: TunedChoice,
    pub estimated_recall: f64,
    /// Expected distance and projection work per query, in scalar
    /// multiply-adds.
    pub estimated_cost: f64,
    pub infeasible: bool,
    pub grid_report: Vec<GridEntry>,
}

/// Flat position of `(trees, vote)` in the per-depth block, both 1-based.
fn grid_slot(trees: usize, vote: usize) -> usize {
    trees * (trees - 1) / 2 + (vote - 1)
}

/// Builds one forest at `(max_trees, max_depth)` and scores every
/// `(T, l, v)` with `T <= max_trees`, `l <= max_depth`, `v <= T` on
/// validation queries drawn from the indexed points (each excluded from
/// its own ground truth and candidate set). Prefixes of the forest stand
/// in for smaller forests and truncated routing for shallower trees.
/// Recall and candidate counts follow the same fallback ladder as
/// [`MrptIndex::approx_knn`]. The cheapest triple meeting the target wins;
/// if none does, the best-recall triple is returned and flagged.
///
/// A target of 1.0 skips the forest and returns an exhaustive index.
pub fn autotune(data: Arc<DataMatrix>, config: &AutoTuneConfig) -> Result<(MrptIndex, AutoTuneResult)> {
    config.validate(data.n())?;
    let n = data.n();
    let d = data.d();
    if config.target_recall >= 1.0 {
        let result = AutoTuneResult {
            chosen: TunedChoice::Exhaustive,
            estimated_recall: 1.0,
            estimated_cost: (n * d) as f64,
            infeasible: false,
            grid_report: Vec::new(),
        };
        return Ok((MrptIndex::exhaustive(data, config.seed), result));
    }
    let sparsity = config.sparsity.unwrap_or_else(|| default_sparsity(d));
    let mut index = build_index(
        Arc::clone(&data),
        config.max_trees,
        config.max_depth,
        sparsity,
        config.seed,
    )?;
    let k = config.k;
    let t_max = config.max_trees;
    let l_max = config.max_depth;
    let block = grid_slot(t_max, t_max) + 1;

    let mut rng = RngStream::new(config.seed, streams::VALIDATION);
    let mut queries = index::sample(&mut rng, n, config.validation_queries).into_vec();
    queries.sort_unstable();

    // per query: (recall hits, candidate count, exhaustive flag) per slot
    let per_query: Vec<Vec<(u32, u32)>> = map_range(queries.len(), |qi| {
        let id = queries[qi];
        let q = data.row(id);
        let truth = exhaustive_knn(&data, q, k, Some(id)).expect("validated k").indices;
        let leaf_pos: Vec<usize> = index.trees.iter().map(|t| t.route(q, l_max)).collect();
        let mut out = vec![(0u32, 0u32); block * l_max];
        let mut counts = vec![0u32; n];
        let mut touched = Vec::new();
        let mut hist = vec![0u32; t_max + 2];
        for l in 1..=l_max {
            for &p in &touched {
                counts[p] = 0;
            }
            touched.clear();
            hist.iter_mut().for_each(|h| *h = 0);
            for (t, tree) in index.trees.iter().enumerate() {
                let pos = leaf_pos[t] >> (l_max - l);
                for &p in tree.subtree_points(l, pos) {
                    let p = p as usize;
                    if p == id {
                        continue;
                    }
                    let c = &mut counts[p];
                    if *c == 0 {
                        touched.push(p);
                    } else {
                        hist[*c as usize] -= 1;
                    }
                    *c += 1;
                    hist[*c as usize] += 1;
                }
                let trees = t + 1;
                // sizes[v] = points with >= v votes, for v in 1..=trees
                let mut sizes = vec![0u32; trees + 2];
                for v in (1..=trees).rev() {
                    sizes[v] = sizes[v + 1] + hist[v];
                }
                let mut hits = vec![0u32; trees + 2];
                for &g in &truth {
                    let c = counts[g] as usize;
                    for h in hits.iter_mut().take(c.min(trees) + 1).skip(1) {
                        *h += 1;
                    }
                }
                let base = (l - 1) * block;
                let mut effective = None;
                for v in 1..=trees {
                    if sizes[v] as usize >= k {
                        effective = Some(v);
                    }
                    out[base + grid_slot(trees, v)] = match effective {
                        Some(e) => (hits[e], sizes[e]),
                        None => (k as u32, u32::MAX),
                    };
                }
            }
        }
        out
    });

    let nnz = nnz_for(d, sparsity) as f64;
    let m = queries.len() as f64;
    let full_scan = n as f64;
    let mut grid = Vec::with_capacity(block * l_max);
    for l in 1..=l_max {
        for trees in 1..=t_max {
            for v in 1..=trees {
                let slot = (l - 1) * block + grid_slot(trees, v);
                let (mut hits, mut cands) = (0u64, 0.0f64);
                for q in &per_query {
                    let (h, c) = q[slot];
                    hits += u64::from(h);
                    cands += if c == u32::MAX { full_scan } else { f64::from(c) };
                }
                let mean_candidates = cands / m;
                grid.push(GridEntry {
                    trees,
                    depth: l,
                    vote_threshold: v,
                    recall: hits as f64 / (m * k as f64),
                    mean_candidates,
                    cost: mean_candidates * d as f64 + (trees * l) as f64 * nnz,
                });
            }
        }
    }

    let meets = |e: &GridEntry| e.recall + 1e-12 >= config.target_recall;
    let best_feasible = grid
        .iter()
        .filter(|e| meets(e))
        .min_by(|a, b| a.cost.total_cmp(&b.cost));
    let (best, infeasible) = match best_feasible {
        Some(e) => (e, false),
        None => (
            grid.iter()
                .max_by(|a, b| a.recall.total_cmp(&b.recall).then(b.cost.total_cmp(&a.cost)))
                .expect("non-empty grid"),
            true,
        ),
    };
    let chosen = TunedChoice::Forest {
        trees: best.trees,
        depth: best.depth,
        vote_threshold: best.vote_threshold,
    };
    index.truncate_trees(best.trees)?;
    index.configure(best.vote_threshold, best.depth)?;
    let result = AutoTuneResult {
        chosen,
        estimated_recall: best.recall,
        estimated_cost: best.cost,
        infeasible,
        grid_report: grid.clone(),
    };
    Ok((index, result))
}
