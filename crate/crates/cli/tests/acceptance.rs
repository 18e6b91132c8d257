//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if
//! any criterion fails. Arguments filter criteria by name substring.

use std::collections::BTreeSet;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rpforest::classifier::{predict_batch, ExhaustiveSearcher};
use rpforest::dataset::{generate_synthetic, DataMatrix};
use rpforest::evaluation::{
    cross_validate, mask_timing, metrics, recall_at_k, recall_sweep, ConfusionMatrix, CvProtocol, MethodConfig,
    SweepOptions,
};
use rpforest::parallel::map_range;
use rpforest::{autotune, build_index, exhaustive_knn, AutoTuneConfig, BallTree, QueryResult, TunedChoice};

type Outcome = Result<String, String>;

/// Name, check and runtime budget.
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Splits a synthetic draw into an indexed part and held-out queries.
fn split(n: usize, held: usize, d: usize, c: usize, spread: f64, seed: u64) -> (Arc<DataMatrix>, DataMatrix) {
    let (all, _) = generate_synthetic(n + held, d, c, spread, seed).unwrap();
    let base: Vec<usize> = (0..n).collect();
    let rest: Vec<usize> = (n..n + held).collect();
    (
        Arc::new(all.select_rows(&base).unwrap()),
        all.select_rows(&rest).unwrap(),
    )
}

/// Coordinates on a 1/16 grid, so squared distances are exact in f64 in
/// any summation order and distance ties are frequent.
fn grid_instance(r: &mut ChaCha8Rng, n: usize, d: usize) -> (DataMatrix, Vec<Vec<i64>>) {
    let ints: Vec<Vec<i64>> = (0..n)
        .map(|_| (0..d).map(|_| r.random_range(-64i64..=64)).collect())
        .collect();
    let values = ints.iter().flatten().map(|&v| v as f32 / 16.0).collect();
    (DataMatrix::new(n, d, values).unwrap(), ints)
}

/// Integer distances, full sort by (distance, index).
fn brute_force(points: &[Vec<i64>], q: &[i64], k: usize) -> (Vec<usize>, Vec<f64>) {
    let mut all: Vec<(i64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
        .collect();
    all.sort();
    all.truncate(k);
    (
        all.iter().map(|x| x.1).collect(),
        all.iter().map(|x| (x.0 as f64 / 256.0).sqrt()).collect(),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = Vec::new();
    let instances = 240;
    for case in 0..instances {
        let n = r.random_range(10..=500);
        let d = r.random_range(1..=32);
        let k = [1, 5, 10][case % 3];
        let (data, ints) = grid_instance(&mut r, n, d);
        let data = Arc::new(data);
        let tree = BallTree::build(Arc::clone(&data), r.random_range(1..=60), case as u64).unwrap();
        for _ in 0..5 {
            let qi: Vec<i64> = (0..d).map(|_| r.random_range(-72i64..=72)).collect();
            let q: Vec<f32> = qi.iter().map(|&v| v as f32 / 16.0).collect();
            let exact = exhaustive_knn(&data, &q, k, None).unwrap();
            let ball = tree.knn(&q, k).unwrap();
            let want = brute_force(&ints, &qi, k);
            if (exact.indices.clone(), exact.distances.clone()) != want
                || ball.indices != exact.indices
                || ball.distances != exact.distances
            {
                mismatches.push(case);
            }
        }
    }
    check(
        mismatches.is_empty(),
        format!("{instances} instances x 5 queries, mismatching instances: {mismatches:?}"),
    )
}

fn exhaustive_degeneracy() -> Outcome {
    let (data, labels) = generate_synthetic(2000, 100, 10, 0.5, 2).unwrap();
    let data = Arc::new(data);
    let (queries, _) = generate_synthetic(100, 100, 10, 0.5, 3).unwrap();
    let mut flat = build_index(Arc::clone(&data), 8, 0, 0.1, 4).unwrap();
    flat.configure(1, 0).unwrap();
    let (exact_mode, tuned) = autotune(Arc::clone(&data), &AutoTuneConfig::for_size(2000, 5, 1.0, 5)).unwrap();
    let exhaustive = ExhaustiveSearcher::new(Arc::clone(&data));
    let mut bad = 0;
    for q in queries.rows() {
        let want = exhaustive_knn(&data, q, 5, None).unwrap();
        bad += usize::from(flat.query(q, 5).unwrap() != want);
        bad += usize::from(exact_mode.query(q, 5).unwrap() != want);
    }
    let want = predict_batch(&exhaustive, &labels, &queries, 5).unwrap().predictions;
    bad += usize::from(predict_batch(&flat, &labels, &queries, 5).unwrap().predictions != want);
    bad += usize::from(predict_batch(&exact_mode, &labels, &queries, 5).unwrap().predictions != want);
    let marked = tuned.chosen == TunedChoice::Exhaustive;
    check(
        bad == 0 && marked,
        format!("100 queries, {bad} differing results, target 1.0 marked exhaustive: {marked}"),
    )
}

fn vote_monotonicity() -> Outcome {
    let data = Arc::new(generate_synthetic(4000, 50, 10, 0.5, 6).unwrap().0);
    let index = build_index(Arc::clone(&data), 16, 6, 0.15, 7).unwrap();
    let (queries, _) = generate_synthetic(1000, 50, 10, 0.5, 8).unwrap();
    let mut violations = 0;
    for q in queries.rows() {
        let sets: Vec<BTreeSet<usize>> = (1..=16)
            .map(|v| index.candidates(q, v, 6).unwrap().into_iter().collect())
            .collect();
        violations += sets.windows(2).filter(|w| !w[1].is_subset(&w[0])).count();
    }
    check(violations == 0, format!("1000 queries, T=16, {violations} violations"))
}

fn mean_recall(approx: &[QueryResult], exact: &[QueryResult]) -> f64 {
    approx
        .iter()
        .zip(exact)
        .map(|(a, e)| recall_at_k(a, e).unwrap())
        .sum::<f64>()
        / approx.len() as f64
}

fn autotune_recall() -> Outcome {
    let (base, queries) = split(5000, 500, 200, 10, 0.25, 9);
    let (index, result) = autotune(Arc::clone(&base), &AutoTuneConfig::for_size(5000, 5, 0.85, 10)).unwrap();
    let rows: Vec<&[f32]> = queries.rows().collect();
    let approx = map_range(rows.len(), |i| index.query(rows[i], 5).unwrap());
    let exact = map_range(rows.len(), |i| exhaustive_knn(&base, rows[i], 5, None).unwrap());
    let measured = mean_recall(&approx, &exact);
    check(
        measured >= 0.80,
        format!(
            "chosen {:?}, estimated {:.3}, measured recall@5 {measured:.3} on 500 held-out queries (need >= 0.80)",
            result.chosen, result.estimated_recall
        ),
    )
}

fn accuracy_gap() -> Outcome {
    let (data, labels) = generate_synthetic(1000, 20, 5, 1.25, 11).unwrap();
    let protocol = CvProtocol {
        folds: 10,
        repetitions: 5,
        k: 5,
        seed: 12,
    };
    let exhaustive = cross_validate(&data, &labels, &MethodConfig::Exhaustive, &protocol).unwrap();
    let mrpt = cross_validate(&data, &labels, &MethodConfig::tuned(0.85), &protocol).unwrap();
    let (a, b) = (exhaustive.summary.mean.accuracy, mrpt.summary.mean.accuracy);
    check(
        (0.6..=0.9).contains(&a) && (a - b).abs() <= 0.02,
        format!(
            "exhaustive {a:.4} (need 0.6..0.9), mrpt@0.85 {b:.4}, gap {:.4} (need <= 0.02)",
            (a - b).abs()
        ),
    )
}

fn speedup() -> Outcome {
    let (base, queries) = split(20000, 500, 1000, 10, 0.25, 13);
    let rows: Vec<&[f32]> = queries.rows().collect();
    let clock = Instant::now();
    let exact = map_range(rows.len(), |i| exhaustive_knn(&base, rows[i], 5, None).unwrap());
    let exhaustive_time = clock.elapsed().as_secs_f64();
    let (index, result) = autotune(Arc::clone(&base), &AutoTuneConfig::for_size(20000, 5, 0.85, 14)).unwrap();
    let clock = Instant::now();
    let approx = map_range(rows.len(), |i| index.query(rows[i], 5).unwrap());
    let mrpt_time = clock.elapsed().as_secs_f64();
    let ratio = mrpt_time / exhaustive_time;
    check(
        ratio <= 0.5,
        format!(
            "500 queries: exhaustive {exhaustive_time:.2}s, mrpt {mrpt_time:.2}s (ratio {ratio:.3}, need <= 0.5), chosen {:?}, recall {:.3}",
            result.chosen,
            mean_recall(&approx, &exact)
        ),
    )
}

fn sweep_monotonicity() -> Outcome {
    let (data, labels) = generate_synthetic(3000, 100, 10, 0.3, 15).unwrap();
    let targets = [0.5, 0.6, 0.7, 0.8, 0.9, 0.97];
    let rows = recall_sweep(&data, &labels, &targets, 5, 5, 16, &SweepOptions::default()).unwrap();
    let recall_ok = rows
        .windows(2)
        .all(|w| w[1].measured_recall >= w[0].measured_recall - 0.05);
    let time_ok = rows.windows(2).all(|w| w[0].query_seconds <= w[1].query_seconds * 1.2);
    let table: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{}:{:.3}/{:.1}us",
                r.target_recall,
                r.measured_recall,
                r.query_seconds * 1e6
            )
        })
        .collect();
    check(
        recall_ok && time_ok,
        format!("recall ok {recall_ok}, time ok {time_ok}; {}", table.join(" ")),
    )
}

/// Rational number `(numerator, denominator)`; zero denominators read as 0.
#[derive(Clone, Copy)]
struct Frac(i128, i128);

impl Frac {
    fn new(n: i128, d: i128) -> Self {
        if d == 0 {
            Frac(0, 1)
        } else {
            Frac(n, d)
        }
    }

    fn add(self, o: Frac) -> Frac {
        Frac(self.0 * o.1 + o.0 * self.1, self.1 * o.1)
    }

    fn value(self) -> f64 {
        self.0 as f64 / self.1 as f64
    }
}

/// (accuracy, sensitivity, specificity, precision, recall, f1) in exact
/// rationals, rounded once at the end.
fn rational_metrics(c: usize, m: &[i128]) -> [f64; 6] {
    let total: i128 = m.iter().sum();
    let trace: i128 = (0..c).map(|i| m[i * c + i]).sum();
    let mut sums = [Frac(0, 1); 4];
    for j in 0..c {
        let tp = m[j * c + j];
        let fn_: i128 = (0..c).map(|p| m[j * c + p]).sum::<i128>() - tp;
        let fp: i128 = (0..c).map(|t| m[t * c + j]).sum::<i128>() - tp;
        let tn = total - tp - fn_ - fp;
        // 2PR/(P+R) reduces to 2tp/(2tp+fp+fn); both are 0 when tp = 0
        let f1 = Frac::new(2 * tp, 2 * tp + fp + fn_);
        sums[0] = sums[0].add(Frac::new(tp, tp + fn_));
        sums[1] = sums[1].add(Frac::new(tn, tn + fp));
        sums[2] = sums[2].add(Frac::new(tp, tp + fp));
        sums[3] = sums[3].add(f1);
    }
    let mean = |f: Frac| Frac(f.0, f.1 * c as i128).value();
    [
        Frac(trace, total).value(),
        mean(sums[0]),
        mean(sums[1]),
        mean(sums[2]),
        mean(sums[0]),
        mean(sums[3]),
    ]
}

fn metrics_correctness() -> Outcome {
    let fixed: [(usize, Vec<u64>, [f64; 6]); 3] = [
        (2, vec![1, 1, 0, 1], [2.0 / 3.0, 0.75, 0.75, 0.75, 0.75, 2.0 / 3.0]),
        (2, vec![4, 0, 0, 6], [1.0; 6]),
        (1, vec![5], [1.0, 1.0, 0.0, 1.0, 1.0, 1.0]),
    ];
    let as_i128 = |counts: &[u64]| counts.iter().map(|&x| i128::from(x)).collect::<Vec<_>>();
    let mut worst = 0.0f64;
    for (c, counts, hand) in &fixed {
        let m = metrics(&ConfusionMatrix::from_counts(*c, counts.clone()).unwrap()).unwrap();
        let got = [m.accuracy, m.sensitivity, m.specificity, m.precision, m.recall, m.f1];
        let exact = rational_metrics(*c, &as_i128(counts));
        for i in 0..6 {
            worst = worst.max((got[i] - hand[i]).abs()).max((got[i] - exact[i]).abs());
        }
    }
    let mut r = ChaCha8Rng::seed_from_u64(17);
    let mut sens_mismatch = 0;
    for _ in 0..1000 {
        let c = r.random_range(1..=6);
        let counts: Vec<u64> = (0..c * c).map(|_| r.random_range(0..20)).collect();
        if counts.iter().all(|&x| x == 0) {
            continue;
        }
        let m = metrics(&ConfusionMatrix::from_counts(c, counts.clone()).unwrap()).unwrap();
        sens_mismatch += usize::from(m.sensitivity != m.recall);
        let exact = rational_metrics(c, &as_i128(&counts));
        let got = [m.accuracy, m.sensitivity, m.specificity, m.precision, m.recall, m.f1];
        for i in 0..6 {
            worst = worst.max((got[i] - exact[i]).abs());
        }
    }
    check(
        worst <= 1e-12 && sens_mismatch == 0,
        format!(
            "max deviation {worst:e} (need <= 1e-12), sensitivity != recall on {sens_mismatch} of 1000 random matrices"
        ),
    )
}

fn cv_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |args: &[&str], threads: &str| -> Result<(), String> {
        let out = Command::new(env!("CARGO_BIN_EXE_rpf"))
            .current_dir(dir.path())
            .args(args)
            .args(["--threads", threads])
            .output()
            .map_err(|e| e.to_string())?;
        if out.status.success() {
            Ok(())
        } else {
            Err(String::from_utf8_lossy(&out.stderr).into_owned())
        }
    };
    run(
        &[
            "synth",
            "--n",
            "600",
            "--d",
            "40",
            "--classes",
            "4",
            "--spread",
            "0.8",
            "--seed",
            "3",
            "--out",
            "cvdata",
        ],
        "1",
    )?;
    let cv = [
        "cv",
        "--data",
        "cvdata.annm",
        "--labels",
        "cvdata.annl",
        "--method",
        "exhaustive",
        "--method",
        "mrpt",
        "--method",
        "balltree",
        "--recall",
        "0.85",
        "--k",
        "5",
        "--folds",
        "10",
        "--reps",
        "2",
        "--seed",
        "4",
        "--out",
        "cv.json",
    ];
    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        run(&cv, threads)?;
        let bytes = std::fs::read(dir.path().join("cv.json")).map_err(|e| e.to_string())?;
        let mut v: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
        mask_timing(&mut v);
        outputs.push(serde_json::to_vec(&v).unwrap());
    }
    let same = outputs[0] == outputs[1];
    check(
        same,
        format!(
            "cv JSON with timing masked ({} bytes) identical at 1 and 8 threads: {same}",
            outputs[0].len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("oracle equivalence", oracle_equivalence, Duration::from_secs(30)),
        ("exhaustive degeneracy", exhaustive_degeneracy, Duration::from_secs(30)),
        ("vote monotonicity", vote_monotonicity, Duration::from_secs(30)),
        ("auto-tune recall", autotune_recall, Duration::from_secs(120)),
        ("accuracy gap", accuracy_gap, Duration::from_secs(300)),
        ("speedup", speedup, Duration::from_secs(600)),
        ("sweep monotonicity", sweep_monotonicity, Duration::from_secs(300)),
        ("metrics correctness", metrics_correctness, Duration::from_secs(60)),
        ("cv determinism", cv_determinism, Duration::from_secs(300)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let clock = Instant::now();
        let outcome = f();
        let took = clock.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {}s budget", budget.as_secs())),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "{} criterion {}: {name}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            took.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
