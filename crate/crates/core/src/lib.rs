//! Approximate k-nearest-neighbor search with forests of sparse random
//! projection trees, exact comparators, kNN classification and a
//! cross-validated evaluation harness.
//!
//! ```
//! use std::sync::Arc;
//! use rpforest::{dataset::generate_synthetic, mrpt::build_index, exact::exhaustive_knn};
//!
//! let (data, _) = generate_synthetic(500, 16, 4, 0.2, 7).unwrap();
//! let data = Arc::new(data);
//! let index = build_index(Arc::clone(&data), 8, 0, 0.25, 1).unwrap();
//! let q = data.row(3);
//! assert_eq!(index.approx_knn(q, 5, 1).unwrap(), exhaustive_knn(&data, q, 5, None).unwrap());
//! ```

pub mod classifier;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod exact;
pub mod mrpt;
pub mod parallel;
pub mod projection;
pub mod query;
pub mod rptree;

pub use classifier::{knn_classify, predict_batch, ExhaustiveSearcher, Prediction, Searcher};
pub use dataset::{DataMatrix, FoldPlan, LabelVector};
pub use error::{Error, Result};
pub use exact::{exhaustive_knn, BallTree};
pub use mrpt::{autotune, build_index, AutoTuneConfig, AutoTuneResult, MrptIndex, TunedChoice};
pub use query::{FallbackLevel, QueryResult};
pub use rptree::RpTree;
