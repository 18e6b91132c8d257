//! Browser demo: a 2-D Gaussian mixture, a random projection forest over
//! it, click-to-query neighbor search and recall-targeted tuning.
//!
//! Every exported method returns JSON text for the page script to draw.

use std::sync::Arc;

use rpforest::dataset::{generate_synthetic, DataMatrix, LabelVector};
use rpforest::evaluation::recall_at_k;
use rpforest::mrpt::{autotune, build_index, AutoTuneConfig, MrptIndex};
use rpforest::{exhaustive_knn, Result};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Demo state without any JS types, so it runs natively in tests.
pub struct DemoState {
    data: Arc<DataMatrix>,
    labels: LabelVector,
    index: MrptIndex,
    sparsity: f64,
}

#[derive(Serialize)]
struct Neighbors {
    candidates: Vec<usize>,
    approx: Vec<usize>,
    exact: Vec<usize>,
    recall: f64,
    candidates_examined: usize,
    fallback: rpforest::FallbackLevel,
}

impl DemoState {
    pub fn new(n: usize, classes: usize, spread: f64, seed: u32) -> Result<Self> {
        let (data, labels) = generate_synthetic(n, 2, classes, spread, u64::from(seed))?;
        let data = Arc::new(data);
        let sparsity = 1.0;
        let index = build_index(Arc::clone(&data), 8, 3.min(rpforest::rptree::max_depth(n)), sparsity, 0)?;
        Ok(Self {
            data,
            labels,
            index,
            sparsity,
        })
    }

    pub fn points_json(&self) -> String {
        let points: Vec<[f32; 2]> = self.data.rows().map(|r| [r[0], r[1]]).collect();
        json!({ "points": points, "labels": self.labels.ids() }).to_string()
    }

    /// Rebuilds the forest; returns the leaf of every point in each tree.
    pub fn build(&mut self, trees: usize, depth: usize, vote: usize, seed: u32) -> Result<String> {
        let mut index = build_index(Arc::clone(&self.data), trees, depth, self.sparsity, u64::from(seed))?;
        index.configure(vote, depth)?;
        self.index = index;
        Ok(self.forest_json())
    }

    fn forest_json(&self) -> String {
        let n = self.data.n();
        let leaves: Vec<Vec<u32>> = self
            .index
            .trees()
            .iter()
            .map(|t| {
                let mut of = vec![0u32; n];
                for (j, leaf) in t.leaves().enumerate() {
                    for &p in leaf {
                        of[p as usize] = j as u32;
                    }
                }
                of
            })
            .collect();
        json!({
            "trees": self.index.tree_count(),
            "depth": self.index.depth_in_use(),
            "vote_threshold": self.index.vote_threshold(),
            "exhaustive": self.index.is_exhaustive(),
            "leaf_of_point": leaves,
        })
        .to_string()
    }

    /// Candidates, approximate and exact neighbors of `(x, y)`.
    pub fn query(&self, x: f32, y: f32, k: usize) -> Result<String> {
        let q = [x, y];
        let k = k.clamp(1, self.data.n());
        let candidates = self
            .index
            .candidates(&q, self.index.vote_threshold(), self.index.depth_in_use())?;
        let approx = self.index.query(&q, k)?;
        let exact = exhaustive_knn(&self.data, &q, k, None)?;
        let out = Neighbors {
            candidates,
            recall: recall_at_k(&approx, &exact)?,
            candidates_examined: approx.candidates_examined,
            fallback: approx.fallback_level,
            approx: approx.indices,
            exact: exact.indices,
        };
        Ok(serde_json::to_string(&out).unwrap_or_default())
    }

    /// Tunes the forest for `target` recall and returns the choice and the
    /// whole recall/cost grid.
    pub fn tune(&mut self, target: f64, k: usize, max_trees: usize, seed: u32) -> Result<String> {
        let n = self.data.n();
        let mut cfg = AutoTuneConfig::for_size(n, k, target, u64::from(seed));
        cfg.max_trees = max_trees.max(1);
        cfg.validation_queries = n.min(100);
        cfg.sparsity = Some(self.sparsity);
        let (index, result) = autotune(Arc::clone(&self.data), &cfg)?;
        self.index = index;
        Ok(json!({ "result": result, "forest": serde_json::from_str::<serde_json::Value>(&self.forest_json()).unwrap_or_default() }).to_string())
    }
}

fn js_err(e: rpforest::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    state: DemoState,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, classes: usize, spread: f64, seed: u32) -> std::result::Result<Demo, JsError> {
        Ok(Self {
            state: DemoState::new(n, classes, spread, seed).map_err(js_err)?,
        })
    }

    pub fn points(&self) -> String {
        self.state.points_json()
    }

    pub fn build(
        &mut self,
        trees: usize,
        depth: usize,
        vote: usize,
        seed: u32,
    ) -> std::result::Result<String, JsError> {
        self.state.build(trees, depth, vote, seed).map_err(js_err)
    }

    pub fn query(&self, x: f32, y: f32, k: usize) -> std::result::Result<String, JsError> {
        self.state.query(x, y, k).map_err(js_err)
    }

    pub fn tune(&mut self, target: f64, k: usize, max_trees: usize, seed: u32) -> std::result::Result<String, JsError> {
        self.state.tune(target, k, max_trees, seed).map_err(js_err)
    }
}
