//! Classification metrics, ANN recall, cross-validated benchmarking and
//! the target-recall sweep.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::classifier::{predict_rows, ExhaustiveSearcher, Searcher, Stopwatch};
use crate::dataset::{stratified_kfold, DataMatrix, FoldPlan, LabelVector};
use crate::error::{arg, Result};
use crate::exact::{exhaustive_knn, BallTree, DEFAULT_LEAF_CAPACITY};
use crate::mrpt::{autotune, build_index, default_depth, AutoTuneConfig, TunedChoice, DEFAULT_TREES};
use crate::parallel::map_range;
use crate::projection::default_sparsity;
use crate::query::QueryResult;

/// `counts[t * classes + p]` = samples of true class `t` predicted `p`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(arg(format!(
                "{classes} classes need {} counts, got {}",
                classes * classes,
                counts.len()
            )));
        }
        Ok(Self { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    /// Same matrix with class `c` renamed to `perm[c]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let c = self.classes;
        let mut counts = vec![0; c * c];
        for t in 0..c {
            for p in 0..c {
                counts[perm[t] * c + perm[p]] = self.get(t, p);
            }
        }
        Self { classes: c, counts }
    }
}

pub fn confusion(y_true: &[u32], y_pred: &[u32], classes: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(arg(format!(
            "{} true labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut counts = vec![0u64; classes * classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        let (t, p) = (t as usize, p as usize);
        if t >= classes || p >= classes {
            return Err(arg(format!("label pair ({t}, {p}) out of range for {classes} classes")));
        }
        counts[t * classes + p] += 1;
    }
    Ok(ConfusionMatrix { classes, counts })
}

/// One-vs-rest measures of a single class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Accuracy plus macro means of the per-class measures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Any ratio with a zero denominator counts as 0.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if cm.classes == 0 || total == 0 {
        return Err(arg("metrics need a non-empty confusion matrix"));
    }
    let c = cm.classes;
    let per_class: Vec<ClassMetrics> = (0..c)
        .map(|k| {
            let tp = cm.get(k, k);
            let row: u64 = (0..c).map(|p| cm.get(k, p)).sum();
            let col: u64 = (0..c).map(|t| cm.get(t, k)).sum();
            let fn_ = row - tp;
            let fp = col - tp;
            let tn = total - tp - fn_ - fp;
            let recall = ratio(tp, tp + fn_);
            let precision = ratio(tp, tp + fp);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                sensitivity: recall,
                specificity: ratio(tn, tn + fp),
                precision,
                recall,
                f1,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / c as f64;
    Ok(MetricsReport {
        accuracy: ratio(cm.trace(), total),
        sensitivity: mean(|m| m.sensitivity),
        specificity: mean(|m| m.specificity),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        per_class,
    })
}

/// Fraction of the exact neighbors present in the approximate result.
pub fn recall_at_k(approx: &QueryResult, exact: &QueryResult) -> Result<f64> {
    if approx.len() != exact.len() || exact.is_empty() {
        return Err(arg(format!(
            "result lengths differ or are empty: {} vs {}",
            approx.len(),
            exact.len()
        )));
    }
    let hits = approx.indices.iter().filter(|i| exact.indices.contains(i)).count();
    Ok(hits as f64 / exact.len() as f64)
}

/// Which searcher to benchmark and how to configure it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodConfig {
    Exhaustive,
    Balltree {
        leaf_capacity: usize,
    },
    /// Fixed forest; `None` fields take the untuned defaults.
    Mrpt {
        trees: Option<usize>,
        depth: Option<usize>,
        vote_threshold: Option<usize>,
        sparsity: Option<f64>,
    },
    /// Forest tuned per training fold for a target recall.
    MrptTuned {
        target_recall: f64,
        max_trees: Option<usize>,
        max_depth: Option<usize>,
        validation_queries: Option<usize>,
        sparsity: Option<f64>,
    },
}

impl MethodConfig {
    pub fn balltree() -> Self {
        Self::Balltree {
            leaf_capacity: DEFAULT_LEAF_CAPACITY,
        }
    }

    pub fn tuned(target_recall: f64) -> Self {
        Self::MrptTuned {
            target_recall,
            max_trees: None,
            max_depth: None,
            validation_queries: None,
            sparsity: None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Exhaustive => "exhaustive",
            Self::Balltree { .. } => "balltree",
            Self::Mrpt { .. } | Self::MrptTuned { .. } => "mrpt",
        }
    }

    /// Builds the searcher over `data`.
    pub fn build(&self, data: Arc<DataMatrix>, k: usize, seed: u64) -> Result<BuiltSearcher> {
        Ok(match self {
            Self::Exhaustive => BuiltSearcher::plain(Box::new(ExhaustiveSearcher::new(data))),
            Self::Balltree { leaf_capacity } => {
                BuiltSearcher::plain(Box::new(BallTree::build(data, *leaf_capacity, seed)?))
            }
            Self::Mrpt {
                trees,
                depth,
                vote_threshold,
                sparsity,
            } => {
                let depth = depth.unwrap_or_else(|| default_depth(data.n(), k));
                let sparsity = sparsity.unwrap_or_else(|| default_sparsity(data.d()));
                let mut index = build_index(data, trees.unwrap_or(DEFAULT_TREES), depth, sparsity, seed)?;
                index.configure(vote_threshold.unwrap_or(1), depth)?;
                BuiltSearcher::plain(Box::new(index))
            }
            Self::MrptTuned {
                target_recall,
                max_trees,
                max_depth,
                validation_queries,
                sparsity,
            } => {
                let mut cfg = AutoTuneConfig::for_size(data.n(), k, *target_recall, seed);
                if let Some(t) = max_trees {
                    cfg.max_trees = *t;
                }
                if let Some(l) = max_depth {
                    cfg.max_depth = *l;
                }
                if let Some(m) = validation_queries {
                    cfg.validation_queries = (*m).min(data.n());
                }
                cfg.sparsity = *sparsity;
                let (index, result) = autotune(data, &cfg)?;
                BuiltSearcher {
                    searcher: Box::new(index),
                    tuned: Some(TuneSummary {
                        chosen: result.chosen,
                        estimated_recall: result.estimated_recall,
                        estimated_cost: result.estimated_cost,
                        infeasible: result.infeasible,
                    }),
                }
            }
        })
    }
}

pub struct BuiltSearcher {
    pub searcher: Box<dyn Searcher>,
    pub tuned: Option<TuneSummary>,
}

impl BuiltSearcher {
    fn plain(searcher: Box<dyn Searcher>) -> Self {
        Self { searcher, tuned: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TuneSummary {
    pub chosen: TunedChoice,
    pub estimated_recall: f64,
    pub estimated_cost: f64,
    pub infeasible: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvProtocol {
    pub folds: usize,
    pub repetitions: usize,
    pub k: usize,
    pub seed: u64,
}

/// Results of one fold of one repetition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkRecord {
    pub repetition: usize,
    pub fold: usize,
    pub metrics: MetricsReport,
    pub build_seconds: f64,
    pub query_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuned: Option<TuneSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Mean or standard deviation of the six measures and the timings.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub build_seconds: f64,
    pub query_seconds: f64,
}

impl MetricSummary {
    fn of(r: &BenchmarkRecord) -> [f64; 8] {
        let m = &r.metrics;
        [
            m.accuracy,
            m.sensitivity,
            m.specificity,
            m.precision,
            m.recall,
            m.f1,
            r.build_seconds,
            r.query_seconds,
        ]
    }

    fn from_array(a: [f64; 8]) -> Self {
        Self {
            accuracy: a[0],
            sensitivity: a[1],
            specificity: a[2],
            precision: a[3],
            recall: a[4],
            f1: a[5],
            build_seconds: a[6],
            query_seconds: a[7],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Summary {
    pub mean: MetricSummary,
    /// Sample standard deviation (0 for a single cell).
    pub std: MetricSummary,
}

/// Mean and sample standard deviation over records, in record order.
pub fn summarize(records: &[BenchmarkRecord]) -> Summary {
    let n = records.len();
    if n == 0 {
        return Summary::default();
    }
    let mut mean = [0.0; 8];
    for r in records {
        for (m, x) in mean.iter_mut().zip(MetricSummary::of(r)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = [0.0; 8];
    if n > 1 {
        for r in records {
            for ((v, x), m) in var.iter_mut().zip(MetricSummary::of(r)).zip(mean) {
                *v += (x - m) * (x - m);
            }
        }
        var.iter_mut().for_each(|v| *v = (*v / (n - 1) as f64).sqrt());
    }
    Summary {
        mean: MetricSummary::from_array(mean),
        std: MetricSummary::from_array(var),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: String,
    pub config: MethodConfig,
    pub seed: u64,
    pub records: Vec<BenchmarkRecord>,
    pub summary: Summary,
}

fn fold_seed(seed: u64, repetition: usize) -> u64 {
    seed.wrapping_add(repetition as u64)
}

fn index_seed(seed: u64, repetition: usize, fold: usize) -> u64 {
    seed ^ ((repetition as u64) << 32 | fold as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn missing_classes(labels: &LabelVector) -> Vec<String> {
    let mut present = vec![false; labels.class_count()];
    for &id in labels.ids() {
        present[id as usize] = true;
    }
    present
        .iter()
        .enumerate()
        .filter(|(_, p)| !**p)
        .map(|(c, _)| format!("class {:?} absent from training fold", labels.class_names()[c]))
        .collect()
}

struct FoldData {
    train: Arc<DataMatrix>,
    train_labels: LabelVector,
    test_rows: Vec<usize>,
    warnings: Vec<String>,
}

fn fold_data(data: &DataMatrix, labels: &LabelVector, plan: &FoldPlan, f: usize, k: usize) -> Result<FoldData> {
    let fold = &plan.folds[f];
    if fold.train.len() < k {
        return Err(arg(format!(
            "fold {f} has {} training rows, fewer than k={k}",
            fold.train.len()
        )));
    }
    let train_labels = labels.subset(&fold.train);
    Ok(FoldData {
        train: Arc::new(data.select_rows(&fold.train)?),
        warnings: missing_classes(&train_labels),
        train_labels,
        test_rows: fold.test.clone(),
    })
}

/// Stratified k-fold cross-validation repeated `repetitions` times. Every
/// fold builds its searcher on the training rows only and classifies the
/// held-out rows. Repetition `r` splits with seed `seed + r`.
pub fn cross_validate(
    data: &DataMatrix,
    labels: &LabelVector,
    method: &MethodConfig,
    protocol: &CvProtocol,
) -> Result<MethodReport> {
    check_protocol(data, labels, protocol)?;
    let mut records = Vec::with_capacity(protocol.folds * protocol.repetitions);
    for rep in 0..protocol.repetitions {
        let plan = stratified_kfold(labels, protocol.folds, fold_seed(protocol.seed, rep))?;
        for f in 0..protocol.folds {
            let fd = fold_data(data, labels, &plan, f, protocol.k)?;
            let clock = Stopwatch::start();
            let built = method.build(Arc::clone(&fd.train), protocol.k, index_seed(protocol.seed, rep, f))?;
            let build_seconds = clock.seconds();
            let rows: Vec<&[f32]> = fd.test_rows.iter().map(|&i| data.row(i)).collect();
            let batch = predict_rows(built.searcher.as_ref(), &fd.train_labels, &rows, protocol.k)?;
            let y_true: Vec<u32> = fd.test_rows.iter().map(|&i| labels.ids()[i]).collect();
            let y_pred: Vec<u32> = batch.predictions.iter().map(|p| p.class).collect();
            let cm = confusion(&y_true, &y_pred, labels.class_count())?;
            records.push(BenchmarkRecord {
                repetition: rep,
                fold: f,
                metrics: metrics(&cm)?,
                build_seconds,
                query_seconds: batch.total_seconds,
                tuned: built.tuned,
                warnings: fd.warnings,
            });
        }
    }
    let summary = summarize(&records);
    Ok(MethodReport {
        method: method.name().to_owned(),
        config: method.clone(),
        seed: protocol.seed,
        records,
        summary,
    })
}

fn check_protocol(data: &DataMatrix, labels: &LabelVector, protocol: &CvProtocol) -> Result<()> {
    if labels.len() != data.n() {
        return Err(arg(format!("{} labels for {} rows", labels.len(), data.n())));
    }
    if protocol.folds < 2 || protocol.repetitions == 0 || protocol.k == 0 {
        return Err(arg("need folds >= 2, repetitions >= 1 and k >= 1"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub target_recall: f64,
    /// Mean recall@k of the tuned searcher against exact search on the
    /// held-out queries.
    pub measured_recall: f64,
    pub accuracy: f64,
    pub exhaustive_accuracy: f64,
    /// Mean wall time per held-out query.
    pub query_seconds: f64,
    pub build_seconds: f64,
}

/// Tuning options shared by every sweep target.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SweepOptions {
    pub max_trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub validation_queries: Option<usize>,
    pub sparsity: Option<f64>,
}

/// One cross-validation pass per target recall. Folds are shared across
/// targets, and each fold's tuning seed is the same for every target, so
/// the targets differ only in which grid point is selected.
pub fn recall_sweep(
    data: &DataMatrix,
    labels: &LabelVector,
    targets: &[f64],
    k: usize,
    folds: usize,
    seed: u64,
    options: &SweepOptions,
) -> Result<Vec<SweepRow>> {
    check_protocol(
        data,
        labels,
        &CvProtocol {
            folds,
            repetitions: 1,
            k,
            seed,
        },
    )?;
    if targets.is_empty() || targets.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err(arg("targets must be non-empty and within (0, 1]"));
    }
    if targets.windows(2).any(|w| w[0] > w[1]) {
        return Err(arg("targets must be sorted ascending"));
    }
    let plan = stratified_kfold(labels, folds, fold_seed(seed, 0))?;
    // per target: recall sum, query seconds, build seconds
    let mut acc = vec![[0.0f64; 3]; targets.len()];
    let mut total_queries = 0usize;
    let mut accuracy_sum = vec![0.0f64; targets.len()];
    let mut exhaustive_accuracy = 0.0;
    for f in 0..folds {
        let fd = fold_data(data, labels, &plan, f, k)?;
        let rows: Vec<&[f32]> = fd.test_rows.iter().map(|&i| data.row(i)).collect();
        let y_true: Vec<u32> = fd.test_rows.iter().map(|&i| labels.ids()[i]).collect();
        let exact = map_range(rows.len(), |i| exhaustive_knn(&fd.train, rows[i], k, None))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let exact_batch = predict_rows(
            &ExhaustiveSearcher::new(Arc::clone(&fd.train)),
            &fd.train_labels,
            &rows,
            k,
        )?;
        exhaustive_accuracy += fold_accuracy(&y_true, &exact_batch.predictions);
        total_queries += rows.len();
        for (t, &target) in targets.iter().enumerate() {
            let method = MethodConfig::MrptTuned {
                target_recall: target,
                max_trees: options.max_trees,
                max_depth: options.max_depth,
                validation_queries: options.validation_queries,
                sparsity: options.sparsity,
            };
            let clock = Stopwatch::start();
            let built = method.build(Arc::clone(&fd.train), k, index_seed(seed, 0, f))?;
            let build_seconds = clock.seconds();
            let batch = predict_rows(built.searcher.as_ref(), &fd.train_labels, &rows, k)?;
            let mut recall = 0.0;
            for (a, e) in batch.neighbors.iter().zip(&exact) {
                recall += recall_at_k(a, e)?;
            }
            acc[t][0] += recall;
            acc[t][1] += batch.query_seconds.iter().sum::<f64>();
            acc[t][2] += build_seconds;
            accuracy_sum[t] += fold_accuracy(&y_true, &batch.predictions);
        }
    }
    let q = total_queries as f64;
    Ok(targets
        .iter()
        .enumerate()
        .map(|(t, &target)| SweepRow {
            target_recall: target,
            measured_recall: acc[t][0] / q,
            accuracy: accuracy_sum[t] / folds as f64,
            exhaustive_accuracy: exhaustive_accuracy / folds as f64,
            query_seconds: acc[t][1] / q,
            build_seconds: acc[t][2] / folds as f64,
        })
        .collect())
}

fn fold_accuracy(y_true: &[u32], predictions: &[crate::classifier::Prediction]) -> f64 {
    let correct = y_true.iter().zip(predictions).filter(|(t, p)| **t == p.class).count();
    correct as f64 / y_true.len().max(1) as f64
}

/// Removes every `*_seconds` field, recursively, so reports can be compared
/// across runs.
pub fn mask_timing(value: &mut Value) {
    match value {
        Value::Object(map) => {
            map.retain(|k, _| !k.ends_with("_seconds"));
            map.values_mut().for_each(mask_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(mask_timing),
        _ => {}
    }
}

/// Flat CSV, one row per fold and repetition.
pub fn records_csv(reports: &[MethodReport]) -> String {
    let mut out = String::from(
        "method,repetition,fold,accuracy,sensitivity,specificity,precision,recall,f1,build_seconds,query_seconds\n",
    );
    for report in reports {
        for r in &report.records {
            let m = &r.metrics;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                report.method,
                r.repetition,
                r.fold,
                m.accuracy,
                m.sensitivity,
                m.specificity,
                m.precision,
                m.recall,
                m.f1,
                r.build_seconds,
                r.query_seconds
            ));
        }
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out =
        String::from("target_recall,measured_recall,accuracy,exhaustive_accuracy,query_seconds,build_seconds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.target_recall, r.measured_recall, r.accuracy, r.exhaustive_accuracy, r.query_seconds, r.build_seconds
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic;
    use crate::query::FallbackLevel;

    #[test]
    fn confusion_by_hand() {
        let cm = confusion(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(cm.counts, vec![1, 1, 0, 1]);
        let diag = confusion(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(diag.trace(), 4);
        assert_eq!(confusion(&[], &[], 2).unwrap().counts, vec![0; 4]);
        assert!(confusion(&[2], &[0], 2).is_err());
        assert!(confusion(&[0], &[], 2).is_err());
    }

    #[test]
    fn metrics_by_hand() {
        let cm = ConfusionMatrix::from_counts(2, vec![1, 1, 0, 1]).unwrap();
        let m = metrics(&cm).unwrap();
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 0.75).abs() < 1e-12);
        assert!((m.precision - 0.75).abs() < 1e-12);
        assert!((m.specificity - 0.75).abs() < 1e-12);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.sensitivity, m.recall);
    }

    #[test]
    fn metrics_degenerate() {
        let m = metrics(&ConfusionMatrix::from_counts(1, vec![5]).unwrap()).unwrap();
        assert_eq!((m.accuracy, m.recall, m.precision, m.specificity), (1.0, 1.0, 1.0, 0.0));
        assert!(metrics(&ConfusionMatrix::from_counts(2, vec![0; 4]).unwrap()).is_err());
        let perfect = metrics(&confusion(&[0, 1, 1], &[0, 1, 1], 2).unwrap()).unwrap();
        for v in [
            perfect.accuracy,
            perfect.sensitivity,
            perfect.specificity,
            perfect.precision,
            perfect.recall,
            perfect.f1,
        ] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn recall_definition() {
        let r = |ix: Vec<usize>| QueryResult {
            distances: vec![0.0; ix.len()],
            candidates_examined: ix.len(),
            indices: ix,
            fallback_level: FallbackLevel::None,
        };
        let exact = r(vec![1, 2, 3, 4, 5]);
        assert_eq!(recall_at_k(&exact, &exact).unwrap(), 1.0);
        assert_eq!(recall_at_k(&r(vec![6, 7, 8, 9, 10]), &exact).unwrap(), 0.0);
        assert_eq!(recall_at_k(&r(vec![1, 2, 3, 4, 9]), &exact).unwrap(), 0.8);
        assert!(recall_at_k(&r(vec![1]), &exact).is_err());
    }

    #[test]
    fn record_count_matches_protocol() {
        let (m, l) = generate_synthetic(30, 3, 3, 0.3, 1).unwrap();
        let p = CvProtocol {
            folds: 3,
            repetitions: 2,
            k: 3,
            seed: 4,
        };
        let rep = cross_validate(&m, &l, &MethodConfig::Exhaustive, &p).unwrap();
        assert_eq!(rep.records.len(), 6);
        let csv = records_csv(&[rep]);
        assert_eq!(csv.lines().count(), 7);
    }

    #[test]
    fn absent_class_is_a_warning() {
        // class "b" has a single member, so one training fold lacks it
        let labels = LabelVector::from_strings(&["a", "a", "a", "a", "b", "a"]);
        let m = DataMatrix::new(6, 1, vec![0.0, 0.1, 0.2, 0.3, 5.0, 0.4]).unwrap();
        let p = CvProtocol {
            folds: 2,
            repetitions: 1,
            k: 1,
            seed: 0,
        };
        let rep = cross_validate(&m, &labels, &MethodConfig::Exhaustive, &p).unwrap();
        assert_eq!(rep.records.iter().filter(|r| !r.warnings.is_empty()).count(), 1);
    }

    #[test]
    fn masking_removes_timings() {
        let mut v = serde_json::json!({"a_seconds": 1, "b": [{"query_seconds": 2, "c": 3}]});
        mask_timing(&mut v);
        assert_eq!(v, serde_json::json!({"b": [{"c": 3}]}));
    }
}
