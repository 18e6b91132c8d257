use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use rpforest::classifier::{predict_batch, Searcher};
use rpforest::dataset::{self, DataMatrix, LabelVector};
use rpforest::evaluation::{self, CvProtocol, MethodConfig, SweepOptions};
use rpforest::mrpt::{self, AutoTuneConfig, MrptIndex};
use rpforest::projection::default_sparsity;
use serde_json::{json, Value};

use crate::{
    BuildArgs, ClassifyArgs, Cli, Command, ConvertArgs, CvArgs, Failure, Format, Method, QueryArgs, SearcherArgs,
    SweepArgs, SynthArgs, TuneArgs,
};

type Outcome = Result<(), Failure>;

pub(crate) fn run(cli: &Cli) -> Outcome {
    let config = serde_json::to_value(cli).context("serializing run configuration")?;
    match &cli.command {
        Command::Synth(a) => synth(a, &config),
        Command::Convert(a) => convert(a, &config),
        Command::Build(a) => build(a, &config),
        Command::Tune(a) => tune(a, &config),
        Command::Query(a) => query(a, &config),
        Command::Classify(a) => classify(a, &config),
        Command::Cv(a) => cv(a, &config),
        Command::Sweep(a) => sweep(a, &config),
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn require_file(path: &Path) -> Outcome {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("input file {} does not exist", path.display())))
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// ANNM, or header-less CSV when the extension is `.csv`.
fn load_matrix(path: &Path) -> Result<DataMatrix, Failure> {
    require_file(path)?;
    if is_csv(path) {
        Ok(dataset::load_csv(path, false, None)?.0)
    } else {
        Ok(dataset::load_binary(path)?)
    }
}

fn load_labels(path: &Path, n: usize) -> Result<LabelVector, Failure> {
    require_file(path)?;
    let labels = dataset::load_labels(path)?;
    if labels.len() != n {
        return Err(usage(format!(
            "{} has {} labels but the data has {n} rows",
            path.display(),
            labels.len()
        )));
    }
    Ok(labels)
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Outcome {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Records the run configuration next to an output that cannot embed it.
fn write_sidecar(output: &Path, config: &Value) -> Outcome {
    let text = serde_json::to_string_pretty(&json!({ "run_config": config })).context("serializing")?;
    write_file(&suffixed(output, ".run.json"), text + "\n")
}

fn write_json(path: &Path, value: &Value) -> Outcome {
    let text = serde_json::to_string_pretty(value).context("serializing report")?;
    write_file(path, text + "\n")
}

fn synth(a: &SynthArgs, config: &Value) -> Outcome {
    let (m, l) = dataset::generate_synthetic(a.n as usize, a.d as usize, a.classes as usize, a.spread, a.seed)?;
    let data = suffixed(&a.out, ".annm");
    let labels = suffixed(&a.out, ".annl");
    dataset::save_binary(&m, &data)?;
    dataset::save_labels(&l, &labels)?;
    write_sidecar(&a.out, config)?;
    println!(
        "wrote {} ({}x{}) and {}",
        data.display(),
        m.n(),
        m.d(),
        labels.display()
    );
    Ok(())
}

fn convert(a: &ConvertArgs, config: &Value) -> Outcome {
    require_file(&a.input)?;
    if is_csv(&a.input) {
        let (m, labels) = dataset::load_csv(&a.input, a.header, a.label_column)?;
        dataset::save_binary(&m, &a.output)?;
        if let Some(labels) = labels {
            let path = a.labels.clone().unwrap_or_else(|| a.output.with_extension("annl"));
            dataset::save_labels(&labels, &path)?;
            println!("wrote {} labels to {}", labels.len(), path.display());
        }
        println!("wrote {}x{} matrix to {}", m.n(), m.d(), a.output.display());
    } else {
        let m = load_matrix(&a.input)?;
        let labels = a.labels.as_deref().map(|p| load_labels(p, m.n())).transpose()?;
        let mut buf = Vec::new();
        dataset::write_csv(&m, labels.as_ref(), &mut buf)?;
        write_file(&a.output, buf)?;
        println!("wrote {}x{} CSV to {}", m.n(), m.d(), a.output.display());
    }
    write_sidecar(&a.output, config)
}

fn build(a: &BuildArgs, config: &Value) -> Outcome {
    let data = Arc::new(load_matrix(&a.data)?);
    let depth = a.depth.unwrap_or_else(|| mrpt::default_depth(data.n(), a.k));
    let sparsity = a.sparsity.unwrap_or_else(|| default_sparsity(data.d()));
    let mut index = mrpt::build_index(data, a.trees, depth, sparsity, a.seed)?;
    index.configure(a.vote, depth)?;
    index.save(&a.out)?;
    write_sidecar(&a.out, config)?;
    println!("wrote {} (T={} l={} v={})", a.out.display(), a.trees, depth, a.vote);
    Ok(())
}

fn tune(a: &TuneArgs, config: &Value) -> Outcome {
    let data = Arc::new(load_matrix(&a.data)?);
    let mut cfg = AutoTuneConfig::for_size(data.n(), a.k, a.recall, a.seed);
    cfg.max_trees = a.max_trees;
    if let Some(l) = a.max_depth {
        cfg.max_depth = l;
    }
    if let Some(m) = a.validation_queries {
        cfg.validation_queries = m;
    }
    cfg.sparsity = a.sparsity;
    let (index, result) = mrpt::autotune(data, &cfg)?;
    index.save(&a.out)?;
    write_sidecar(&a.out, config)?;
    let report_path = a.report.clone().unwrap_or_else(|| suffixed(&a.out, ".tune.json"));
    write_json(
        &report_path,
        &json!({ "run_config": config, "tune_config": cfg, "result": result }),
    )?;
    let flag = if result.infeasible {
        " (infeasible: best recall shown)"
    } else {
        ""
    };
    println!(
        "chosen {:?}, estimated recall {:.4}, cost {:.0}{flag}",
        result.chosen, result.estimated_recall, result.estimated_cost
    );
    Ok(())
}

fn searcher(args: &SearcherArgs, data: Arc<DataMatrix>, k: usize) -> Result<Box<dyn Searcher>, Failure> {
    if let Some(path) = &args.index {
        if args.method != Method::Mrpt {
            return Err(usage("--index requires --method mrpt"));
        }
        require_file(path)?;
        return Ok(Box::new(MrptIndex::load(path, data)?));
    }
    let method = method_config(
        args.method,
        args.recall,
        args.trees,
        args.depth,
        args.vote,
        args.leaf_capacity,
    );
    Ok(method.build(data, k, args.seed)?.searcher)
}

fn method_config(
    method: Method,
    recall: f64,
    trees: Option<usize>,
    depth: Option<usize>,
    vote: Option<usize>,
    leaf_capacity: usize,
) -> MethodConfig {
    match method {
        Method::Exhaustive => MethodConfig::Exhaustive,
        Method::Balltree => MethodConfig::Balltree { leaf_capacity },
        Method::Mrpt if trees.is_some() || depth.is_some() || vote.is_some() => MethodConfig::Mrpt {
            trees,
            depth,
            vote_threshold: vote,
            sparsity: None,
        },
        Method::Mrpt => MethodConfig::tuned(recall),
    }
}

fn query(a: &QueryArgs, config: &Value) -> Outcome {
    let data = Arc::new(load_matrix(&a.data)?);
    let queries = load_matrix(&a.queries)?;
    if queries.d() != data.d() {
        return Err(usage(format!(
            "queries have {} dims, data has {}",
            queries.d(),
            data.d()
        )));
    }
    let s = searcher(&a.searcher, data, a.k)?;
    let mut out = String::from("query_row,rank,index,distance,candidates_examined,fallback\n");
    for (row, q) in queries.rows().enumerate() {
        let r = s.knn(q, a.k)?;
        let fallback = serde_json::to_value(r.fallback_level).context("serializing")?;
        for (rank, (i, dist)) in r.indices.iter().zip(&r.distances).enumerate() {
            let _ = writeln!(
                out,
                "{row},{rank},{i},{dist},{},{}",
                r.candidates_examined,
                fallback.as_str().unwrap_or_default()
            );
        }
    }
    write_file(&a.out, out)?;
    write_sidecar(&a.out, config)?;
    println!("{} queries answered by {}", queries.n(), s.describe());
    Ok(())
}

fn classify(a: &ClassifyArgs, config: &Value) -> Outcome {
    let data = Arc::new(load_matrix(&a.data)?);
    let labels = load_labels(&a.labels, data.n())?;
    let queries = load_matrix(&a.queries)?;
    if queries.d() != data.d() {
        return Err(usage(format!(
            "queries have {} dims, data has {}",
            queries.d(),
            data.d()
        )));
    }
    let s = searcher(&a.searcher, data, a.k)?;
    let batch = predict_batch(s.as_ref(), &labels, &queries, a.k)?;
    let names = labels.class_names();
    let mut out = String::from("query_row,predicted_class_name,votes,tie_broken,query_seconds\n");
    for (row, (p, secs)) in batch.predictions.iter().zip(&batch.query_seconds).enumerate() {
        let votes: Vec<String> = p
            .votes
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0)
            .map(|(c, v)| format!("{}:{v}", names[c]))
            .collect();
        let _ = writeln!(
            out,
            "{row},{},{},{},{secs}",
            csv_field(&names[p.class as usize]),
            csv_field(&votes.join(";")),
            p.tie_broken
        );
    }
    write_file(&a.out, out)?;
    write_sidecar(&a.out, config)?;
    println!(
        "{} predictions by {} in {:.3}s",
        batch.predictions.len(),
        s.describe(),
        batch.total_seconds
    );
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn cv(a: &CvArgs, config: &Value) -> Outcome {
    let data = load_matrix(&a.data)?;
    let labels = load_labels(&a.labels, data.n())?;
    let methods = if a.methods.is_empty() {
        vec![Method::Exhaustive, Method::Mrpt]
    } else {
        a.methods.clone()
    };
    let protocol = CvProtocol {
        folds: a.folds,
        repetitions: a.reps,
        k: a.k,
        seed: a.seed,
    };
    let mut reports = Vec::new();
    for m in methods {
        let mut method = method_config(m, a.recall, a.trees, a.depth, a.vote, a.leaf_capacity);
        if let MethodConfig::MrptTuned {
            max_trees,
            max_depth,
            validation_queries,
            ..
        } = &mut method
        {
            *max_trees = a.max_trees;
            *max_depth = a.max_depth;
            *validation_queries = a.validation_queries;
        }
        let report = evaluation::cross_validate(&data, &labels, &method, &protocol)?;
        let s = &report.summary.mean;
        println!(
            "{:<10} accuracy {:.4} sensitivity {:.4} specificity {:.4} precision {:.4} f1 {:.4} build {:.4}s query {:.4}s",
            report.method, s.accuracy, s.sensitivity, s.specificity, s.precision, s.f1, s.build_seconds, s.query_seconds
        );
        reports.push(report);
    }
    match a.format {
        Format::Json => write_json(&a.out, &json!({ "run_config": config, "methods": reports })),
        Format::Csv => {
            write_file(&a.out, evaluation::records_csv(&reports))?;
            write_sidecar(&a.out, config)
        }
    }
}

fn sweep(a: &SweepArgs, config: &Value) -> Outcome {
    let data = load_matrix(&a.data)?;
    let labels = load_labels(&a.labels, data.n())?;
    let options = SweepOptions {
        max_trees: a.max_trees,
        max_depth: a.max_depth,
        validation_queries: a.validation_queries,
        sparsity: None,
    };
    let rows = evaluation::recall_sweep(&data, &labels, &a.targets, a.k, a.folds, a.seed, &options)?;
    for r in &rows {
        println!(
            "target {:.3} recall {:.4} accuracy {:.4} (exhaustive {:.4}) query {:.3e}s",
            r.target_recall, r.measured_recall, r.accuracy, r.exhaustive_accuracy, r.query_seconds
        );
    }
    match a.format {
        Format::Json => write_json(&a.out, &json!({ "run_config": config, "rows": rows })),
        Format::Csv => {
            write_file(&a.out, evaluation::sweep_csv(&rows))?;
            write_sidecar(&a.out, config)
        }
    }
}
