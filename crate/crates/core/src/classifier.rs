//! Majority-vote kNN classification on top of any searcher.

use std::sync::Arc;

use serde::Serialize;

use crate::dataset::{DataMatrix, LabelVector};
use crate::error::{arg, Result};
use crate::exact::{exhaustive_knn, BallTree};
use crate::mrpt::MrptIndex;
use crate::parallel::map_range;
use crate::query::QueryResult;

/// A k-nearest-neighbor query interface.
pub trait Searcher: Send + Sync {
    fn knn(&self, q: &[f32], k: usize) -> Result<QueryResult>;

    /// Short method name used in reports.
    fn name(&self) -> &'static str;

    /// Human-readable configuration summary.
    fn describe(&self) -> String;

    fn dim(&self) -> usize;
}

#[derive(Clone, Debug)]
pub struct ExhaustiveSearcher {
    data: Arc<DataMatrix>,
}

impl ExhaustiveSearcher {
    pub fn new(data: Arc<DataMatrix>) -> Self {
        Self { data }
    }
}

impl Searcher for ExhaustiveSearcher {
    fn knn(&self, q: &[f32], k: usize) -> Result<QueryResult> {
        exhaustive_knn(&self.data, q, k, None)
    }

    fn name(&self) -> &'static str {
        "exhaustive"
    }

    fn describe(&self) -> String {
        format!("exhaustive scan over {} points", self.data.n())
    }

    fn dim(&self) -> usize {
        self.data.d()
    }
}

impl Searcher for BallTree {
    fn knn(&self, q: &[f32], k: usize) -> Result<QueryResult> {
        BallTree::knn(self, q, k)
    }

    fn name(&self) -> &'static str {
        "balltree"
    }

    fn describe(&self) -> String {
        format!(
            "ball tree, leaf capacity {}, {} nodes",
            self.leaf_capacity(),
            self.nodes().len()
        )
    }

    fn dim(&self) -> usize {
        self.data().d()
    }
}

impl Searcher for MrptIndex {
    fn knn(&self, q: &[f32], k: usize) -> Result<QueryResult> {
        self.query(q, k)
    }

    fn name(&self) -> &'static str {
        "mrpt"
    }

    fn describe(&self) -> String {
        if self.is_exhaustive() {
            "mrpt in exhaustive mode".to_owned()
        } else {
            format!(
                "mrpt T={} l={} v={} (built depth {})",
                self.tree_count(),
                self.depth_in_use(),
                self.vote_threshold(),
                self.depth()
            )
        }
    }

    fn dim(&self) -> usize {
        self.data().d()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Prediction {
    pub class: u32,
    /// Neighbor count per class id.
    pub votes: Vec<u32>,
    pub tie_broken: bool,
}

/// Plain majority vote over the `k` neighbors. Ties go to the tied class
/// with the smallest summed neighbor distance, then to the lowest id.
pub fn knn_classify(result: &QueryResult, train_labels: &LabelVector, k: usize) -> Result<Prediction> {
    if result.len() != k || result.distances.len() != k {
        return Err(arg(format!("expected {k} neighbors, got {}", result.len())));
    }
    let c = train_labels.class_count();
    let mut votes = vec![0u32; c];
    let mut dist_sum = vec![0.0f64; c];
    for (&i, &dist) in result.indices.iter().zip(&result.distances) {
        let id = *train_labels
            .ids()
            .get(i)
            .ok_or_else(|| arg(format!("neighbor {i} has no label")))? as usize;
        votes[id] += 1;
        dist_sum[id] += dist;
    }
    let top = votes.iter().copied().max().unwrap_or(0);
    let tied: Vec<usize> = (0..c).filter(|&id| votes[id] == top).collect();
    // min_by keeps the first minimum, i.e. the lowest id among equal sums
    let class = tied
        .iter()
        .copied()
        .min_by(|&a, &b| dist_sum[a].total_cmp(&dist_sum[b]))
        .unwrap_or(0);
    Ok(Prediction {
        class: class as u32,
        votes,
        tie_broken: tied.len() > 1,
    })
}

#[derive(Clone, Debug, Default)]
pub struct BatchPredictions {
    pub predictions: Vec<Prediction>,
    pub neighbors: Vec<QueryResult>,
    /// Wall time per query, measured on the thread that ran it.
    pub query_seconds: Vec<f64>,
    pub total_seconds: f64,
}

/// Classifies every row of `queries`; output order follows input order.
pub fn predict_batch(
    searcher: &dyn Searcher,
    train_labels: &LabelVector,
    queries: &DataMatrix,
    k: usize,
) -> Result<BatchPredictions> {
    let rows: Vec<&[f32]> = queries.rows().collect();
    predict_rows(searcher, train_labels, &rows, k)
}

/// Like [`predict_batch`] over borrowed rows, which may be empty.
pub fn predict_rows(
    searcher: &dyn Searcher,
    train_labels: &LabelVector,
    rows: &[&[f32]],
    k: usize,
) -> Result<BatchPredictions> {
    if let Some(bad) = rows.iter().find(|r| r.len() != searcher.dim()) {
        return Err(arg(format!(
            "query has {} dims, searcher expects {}",
            bad.len(),
            searcher.dim()
        )));
    }
    let clock = Stopwatch::start();
    let answers = map_range(rows.len(), |i| {
        let clock = Stopwatch::start();
        let result = searcher.knn(rows[i], k)?;
        let prediction = knn_classify(&result, train_labels, k)?;
        Ok((prediction, result, clock.seconds()))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let total_seconds = clock.seconds();
    let mut out = BatchPredictions {
        total_seconds,
        ..Default::default()
    };
    for (p, r, s) in answers {
        out.predictions.push(p);
        out.neighbors.push(r);
        out.query_seconds.push(s);
    }
    Ok(out)
}

/// Wall clock that reads zero where `std::time::Instant` is unavailable.
#[derive(Clone, Copy, Debug)]
pub struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    pub fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    pub fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}
