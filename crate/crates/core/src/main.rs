use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use axplain::dataset::{load_csv, one_hot_encode, select_top_k, Dataset, FeatureSchema};
use axplain::eval::{aggregate, fidelity, gen_synthetic, FidelityResult, ReportMetadata};
use axplain::explain::{explain_batch, render_pairs, Explanation};
use axplain::gbm::{load_ensemble, Ensemble};
use axplain::solver::{export_smt2, flip_reachable};
use axplain::trainer::{fit, TrainParams};
use axplain::Instance;

#[derive(Parser)]
#[command(
    name = "axplain",
    version,
    about = "Formal explanations for gradient-boosted tree classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write its dump.
    Train(TrainArgs),
    /// Explain every row of a dataset.
    Explain(ExplainArgs),
    /// Measure fidelity of explanations with synthetic samples.
    Evaluate(EvaluateArgs),
    /// Summarize a model and, optionally, its predictions on a dataset.
    Stats(StatsArgs),
    /// Write counterexample queries as SMT-LIB2 scripts.
    ExportSmt(ExportArgs),
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, default_value = "label")]
    label_col: String,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    num_trees: usize,
    #[arg(long, default_value_t = 6)]
    max_depth: usize,
    #[arg(long, default_value_t = 0.3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    min_child_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    base_score: f64,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    explanations: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    n_synthetic: u64,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, requires = "schema")]
    data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    schema: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    label_col: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long)]
    model: PathBuf,
    /// Output directory for the scripts and manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated row indices (default: every row).
    #[arg(long, value_delimiter = ',')]
    rows: Option<Vec<usize>>,
    /// Fixed set per query: comma-separated names, `@all`, `@none` or
    /// `@explanation`. Repeat for several queries per row.
    #[arg(long)]
    fixed: Vec<String>,
    #[arg(long)]
    explanations: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Failure with a process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: 1,
            error: e.into(),
        }
    }
}

fn usage(msg: String) -> Failure {
    Failure {
        code: 2,
        error: anyhow!(msg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Stats(a) => cmd_stats(a),
        Command::ExportSmt(a) => cmd_export_smt(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn require_files(paths: &[&Path]) -> Result<(), Failure> {
    for p in paths {
        if !p.is_file() {
            return Err(usage(format!("input file {} does not exist", p.display())));
        }
    }
    Ok(())
}

fn config_echo(command: &str, seed: u64, extra: Value) -> Value {
    let mut config = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
    });
    if let (Value::Object(c), Value::Object(e)) = (&mut config, extra) {
        c.extend(e);
    }
    config
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// `report.json` -> `report.<suffix>`
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn load_encoded(input: &DataArgs) -> Result<Dataset> {
    let schema = FeatureSchema::load(&input.schema)
        .with_context(|| format!("reading {}", input.schema.display()))?;
    let raw = load_csv(&input.data, &schema, &input.label_col)
        .with_context(|| format!("reading {}", input.data.display()))?;
    Ok(one_hot_encode(&raw))
}

fn load_model(path: &Path) -> Result<Ensemble> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load_ensemble(&text).with_context(|| format!("loading {}", path.display()))
}

/// Dataset columns aligned to the model's features.
fn align(data: &Dataset, model: &Ensemble) -> Result<Dataset> {
    data.project(model.features())
        .map_err(|e| anyhow!("model/schema mismatch: {e}"))
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    Ok(builder.build()?)
}

fn ranking(model: &Ensemble) -> Vec<(String, usize, f64)> {
    let counts = model.split_counts();
    let norm = model.normalized_importance();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]));
    order
        .into_iter()
        .map(|f| (model.features()[f].clone(), counts[f], norm[f]))
        .collect()
}

fn cmd_train(a: TrainArgs) -> Result<(), Failure> {
    require_files(&[&a.input.data, &a.input.schema])?;
    let params = TrainParams {
        num_trees: a.num_trees,
        max_depth: a.max_depth,
        learning_rate: a.learning_rate,
        min_child_weight: a.min_child_weight,
        lambda: a.lambda,
        base_score: a.base_score,
    };
    let mut data = load_encoded(&a.input)?;
    let mut model = fit(&data, &params)?;
    if let Some(k) = a.top_k {
        let names = model.features().to_vec();
        let importance: HashMap<String, f64> = names
            .into_iter()
            .zip(model.normalized_importance())
            .collect();
        data = select_top_k(&data, &importance, k)?;
        model = fit(&data, &params)?;
    }
    let rank = ranking(&model);
    println!("feature importance (split count):");
    for (name, count, norm) in &rank {
        println!("  {name:<24} {count:>6} {norm:.4}");
    }
    let mut dump = model.to_json_value();
    dump["meta"] = json!({
        "config": config_echo("train", a.seed, json!({ "top_k": a.top_k, "label_col": a.input.label_col })),
        "params": params,
        "importance": rank.iter().map(|(n, c, _)| json!({ "feature": n, "splits": c })).collect::<Vec<_>>(),
    });
    write_json(&a.out, &dump)?;
    println!(
        "wrote {} ({} trees, {} features)",
        a.out.display(),
        model.trees().len(),
        model.num_features()
    );
    Ok(())
}

fn cmd_explain(a: ExplainArgs) -> Result<(), Failure> {
    require_files(&[&a.input.data, &a.input.schema, &a.model])?;
    let model = load_model(&a.model)?;
    let data = align(&load_encoded(&a.input)?, &model)?;
    let results = pool(a.workers)?.install(|| explain_batch(&model, &data.rows));

    let names = model.features();
    let mut records = Vec::new();
    let mut timings = Vec::new();
    let mut counts = [0usize; 2];
    let mut failed = 0;
    for (row, r) in results.iter().enumerate() {
        match r {
            Ok(e) => {
                counts[e.predicted_class as usize] += 1;
                records.push(explanation_record(row, e, names));
                timings.push(json!({ "row": row, "wall_time": e.wall_time }));
            }
            Err(err) => {
                failed += 1;
                records.push(json!({ "row": row, "error": err.to_string() }));
            }
        }
    }
    let doc = json!({
        "config": config_echo("explain", a.seed, json!({ "label_col": a.input.label_col })),
        "features": names,
        "class_counts": { "0": counts[0], "1": counts[1] },
        "records": records,
    });
    write_json(&a.out, &doc)?;
    let timing_path = sidecar(&a.out, "timing.json");
    write_json(&timing_path, &json!({ "rows": timings }))?;

    let mut times: Vec<f64> = results.iter().flatten().map(|e| e.wall_time).collect();
    times.sort_by(f64::total_cmp);
    let median = times.get(times.len() / 2).copied().unwrap_or(0.0);
    println!(
        "{} explanations: {} class 0, {} class 1; median time {:.4}s",
        results.len(),
        counts[0],
        counts[1],
        median
    );
    if failed > 0 {
        return Err(anyhow!("{failed} rows could not be explained").into());
    }
    Ok(())
}

fn explanation_record(row: usize, e: &Explanation, names: &[String]) -> Value {
    json!({
        "row": row,
        "predicted_class": e.predicted_class,
        "retained": e.retained.iter().map(|&(f, v)| json!({ "feature": names[f], "value": v })).collect::<Vec<_>>(),
        "dropped": e.dropped.iter().map(|&f| names[f].as_str()).collect::<Vec<_>>(),
        "query_count": e.query_count,
        "rendered": e.render(names),
    })
}

/// Explanation read back from an explain output file.
struct Record {
    row: usize,
    predicted_class: u8,
    retained: Vec<(usize, f64)>,
}

fn read_records(path: &Path, model: &Ensemble) -> Result<Vec<Record>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let records = doc["records"]
        .as_array()
        .ok_or_else(|| anyhow!("{}: no `records` array", path.display()))?;
    records
        .iter()
        .map(|r| {
            let row = r["row"]
                .as_u64()
                .ok_or_else(|| anyhow!("record without `row`"))? as usize;
            let class = r["predicted_class"]
                .as_u64()
                .filter(|&c| c <= 1)
                .ok_or_else(|| anyhow!("row {row}: missing predicted_class"))?
                as u8;
            let retained = r["retained"]
                .as_array()
                .ok_or_else(|| anyhow!("row {row}: missing retained"))?
                .iter()
                .map(|p| {
                    let name = p["feature"]
                        .as_str()
                        .ok_or_else(|| anyhow!("row {row}: bad feature"))?;
                    let f = model
                        .feature_index(name)
                        .ok_or_else(|| anyhow!("row {row}: unknown feature `{name}`"))?;
                    let v = p["value"]
                        .as_f64()
                        .ok_or_else(|| anyhow!("row {row}: bad value"))?;
                    Ok((f, v))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Record {
                row,
                predicted_class: class,
                retained,
            })
        })
        .collect()
}

fn read_timings(path: &Path) -> Option<HashMap<usize, f64>> {
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(path).ok()?).ok()?;
    doc["rows"]
        .as_array()?
        .iter()
        .map(|r| Some((r["row"].as_u64()? as usize, r["wall_time"].as_f64()?)))
        .collect()
}

/// Independent stream per row, derived from the run seed.
fn row_seed(seed: u64, row: usize) -> u64 {
    let mut z = seed
        ^ (row as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<(), Failure> {
    require_files(&[&a.input.data, &a.input.schema, &a.model, &a.explanations])?;
    let model = load_model(&a.model)?;
    let data = align(&load_encoded(&a.input)?, &model)?;
    let records = read_records(&a.explanations, &model)?;
    if records.len() != data.len() {
        return Err(anyhow!(
            "misaligned inputs: {} explanations for {} dataset rows",
            records.len(),
            data.len()
        )
        .into());
    }
    for (i, r) in records.iter().enumerate() {
        let x = &data.rows[i];
        if r.row != i {
            return Err(anyhow!("misaligned inputs: record {i} is for row {}", r.row).into());
        }
        if r.predicted_class != model.predict_class(&x.values) {
            return Err(
                anyhow!("misaligned inputs: row {i} has a different predicted class").into(),
            );
        }
        if let Some(&(f, v)) = r.retained.iter().find(|&&(f, v)| x.values[f] != v) {
            return Err(anyhow!(
                "misaligned inputs: row {i} pins `{}` = {v}, dataset has {}",
                model.features()[f],
                x.values[f]
            )
            .into());
        }
    }
    let timings = read_timings(&sidecar(&a.explanations, "timing.json"));
    let n = a.n_synthetic as usize;

    let audited: Vec<(f64, bool)> = pool(a.workers)?.install(|| {
        records
            .par_iter()
            .enumerate()
            .map(|(i, r)| {
                let x = &data.rows[i];
                let samples = gen_synthetic(x, &r.retained, &data.schema, n, row_seed(a.seed, i))?;
                let pct = fidelity(&model, x, &samples)?;
                let fixed: Vec<usize> = r.retained.iter().map(|&(f, _)| f).collect();
                let sufficient = !flip_reachable(&model, x, &fixed).reachable;
                Ok((pct, sufficient))
            })
            .collect::<Result<Vec<_>, axplain::eval::EvalError>>()
    })?;

    let results: Vec<FidelityResult> = records
        .iter()
        .zip(&audited)
        .map(|(r, &(pct, _))| FidelityResult {
            index: r.row,
            predicted_class: r.predicted_class,
            explanation_size: r.retained.len(),
            fidelity_pct: pct,
            gen_time: timings.as_ref().and_then(|t| t.get(&r.row).copied()),
        })
        .collect();
    let explanations: Vec<Explanation> = records
        .iter()
        .zip(&data.rows)
        .map(|(r, x)| Explanation {
            instance: x.clone(),
            predicted_class: r.predicted_class,
            retained: r.retained.clone(),
            dropped: vec![],
            wall_time: 0.0,
            query_count: 0,
        })
        .collect();
    let report = aggregate(
        &results,
        &explanations,
        model.features(),
        &model.normalized_importance(),
        ReportMetadata::new(a.seed, n),
    );
    let insufficient: Vec<usize> = records
        .iter()
        .zip(&audited)
        .filter(|(_, &(_, ok))| !ok)
        .map(|(r, _)| r.row)
        .collect();

    let rows: Vec<Value> = results
        .iter()
        .zip(&audited)
        .map(|(r, &(_, sufficient))| {
            json!({
                "row": r.index,
                "predicted_class": r.predicted_class,
                "explanation_size": r.explanation_size,
                "fidelity_pct": r.fidelity_pct,
                "sufficient": sufficient,
            })
        })
        .collect();
    let doc = json!({
        "config": config_echo("evaluate", a.seed, json!({ "n_synthetic": n, "label_col": a.input.label_col })),
        "report": report,
        "insufficient_rows": insufficient,
        "rows": rows,
    });
    write_json(&a.out, &doc)?;
    let timing: Value = serde_json::from_str(&report.timing_json())?;
    write_json(&sidecar(&a.out, "timing.json"), &timing)?;
    let table = format!(
        "seed = {}, n_synthetic = {}, version = {}\n\n{}\n{}",
        a.seed,
        n,
        env!("CARGO_PKG_VERSION"),
        report.render_table(),
        report.render_frequency_table()
    );
    std::fs::write(sidecar(&a.out, "txt"), &table)?;
    print!("{table}");

    if !report.flagged_rows.is_empty() || !insufficient.is_empty() {
        for r in &report.flagged_rows {
            eprintln!("row {r}: fidelity below 100%");
        }
        for r in &insufficient {
            eprintln!("row {r}: explanation is not sufficient");
        }
        return Err(Failure {
            code: 3,
            error: anyhow!(
                "audit failed: {} rows below 100% fidelity, {} insufficient",
                report.flagged_rows.len(),
                insufficient.len()
            ),
        });
    }
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> Result<(), Failure> {
    require_files(&[&a.model])?;
    let model = load_model(&a.model)?;
    let depth = model.trees().iter().map(|t| t.depth()).max().unwrap_or(0);
    let thresholds = model.thresholds();
    println!(
        "trees: {}, internal nodes: {}, max depth: {}, init: {}",
        model.trees().len(),
        model.internal_count(),
        depth,
        model.init()
    );
    println!(
        "{:<24} {:>6} {:>10} {:>11}",
        "feature", "splits", "importance", "thresholds"
    );
    let rank = ranking(&model);
    for (name, count, norm) in &rank {
        let f = model.feature_index(name).expect("ranked feature exists");
        println!(
            "{name:<24} {count:>6} {norm:>10.4} {:>11}",
            thresholds[f].len()
        );
    }
    let mut doc = json!({
        "config": config_echo("stats", 0, json!({})),
        "trees": model.trees().len(),
        "internal_nodes": model.internal_count(),
        "max_depth": depth,
        "init": model.init(),
        "importance": rank.iter().map(|(n, c, w)| json!({ "feature": n, "splits": c, "importance": w })).collect::<Vec<_>>(),
    });
    if let (Some(data), Some(schema)) = (a.data, a.schema) {
        require_files(&[&data, &schema])?;
        let input = DataArgs {
            data,
            schema,
            label_col: a.label_col,
        };
        let ds = align(&load_encoded(&input)?, &model)?;
        let mut predicted = [0usize; 2];
        let mut correct = 0;
        for (x, &y) in ds.rows.iter().zip(&ds.labels) {
            let c = model.predict_class(&x.values);
            predicted[c as usize] += 1;
            correct += usize::from(c == y);
        }
        let labels = ds.class_counts();
        println!(
            "rows: {}, labels 0/1: {}/{}, predicted 0/1: {}/{}, accuracy: {:.4}",
            ds.len(),
            labels[0],
            labels[1],
            predicted[0],
            predicted[1],
            correct as f64 / ds.len().max(1) as f64
        );
        doc["dataset"] = json!({
            "rows": ds.len(),
            "labels": labels,
            "predicted": predicted,
            "accuracy": correct as f64 / ds.len().max(1) as f64,
        });
    }
    if let Some(out) = a.out {
        write_json(&out, &doc)?;
    }
    Ok(())
}

enum FixedSpec {
    All,
    None,
    Explanation,
    Names(Vec<usize>),
}

fn parse_fixed(spec: &str, model: &Ensemble) -> Result<FixedSpec, Failure> {
    Ok(match spec.trim() {
        "@all" => FixedSpec::All,
        "@none" => FixedSpec::None,
        "@explanation" => FixedSpec::Explanation,
        list => FixedSpec::Names(
            list.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|name| {
                    model
                        .feature_index(name)
                        .ok_or_else(|| usage(format!("--fixed names unknown feature `{name}`")))
                })
                .collect::<Result<_, _>>()?,
        ),
    })
}

fn cmd_export_smt(a: ExportArgs) -> Result<(), Failure> {
    require_files(&[&a.input.data, &a.input.schema, &a.model])?;
    if let Some(e) = &a.explanations {
        require_files(&[e])?;
    }
    let model = load_model(&a.model)?;
    let data = align(&load_encoded(&a.input)?, &model)?;
    let mut specs = a
        .fixed
        .iter()
        .map(|s| parse_fixed(s, &model))
        .collect::<Result<Vec<_>, _>>()?;
    if specs.is_empty() {
        specs.push(if a.explanations.is_some() {
            FixedSpec::Explanation
        } else {
            FixedSpec::All
        });
    }
    let records = match &a.explanations {
        Some(p) => Some(read_records(p, &model)?),
        None if specs.iter().any(|s| matches!(s, FixedSpec::Explanation)) => {
            return Err(usage("@explanation needs --explanations".into()))
        }
        None => None,
    };
    let rows = a.rows.clone().unwrap_or_else(|| (0..data.len()).collect());
    if let Some(&bad) = rows.iter().find(|&&r| r >= data.len()) {
        return Err(usage(format!(
            "row {bad} is out of range (dataset has {} rows)",
            data.len()
        )));
    }
    std::fs::create_dir_all(&a.out)?;

    let mut queries = Vec::new();
    for &row in &rows {
        let x: &Instance = &data.rows[row];
        for (k, spec) in specs.iter().enumerate() {
            let fixed: Vec<usize> = match spec {
                FixedSpec::All => (0..model.num_features()).collect(),
                FixedSpec::None => vec![],
                FixedSpec::Names(v) => v.clone(),
                FixedSpec::Explanation => {
                    let rec = records
                        .as_ref()
                        .and_then(|rs| rs.iter().find(|r| r.row == row))
                        .ok_or_else(|| anyhow!("no explanation for row {row}"))?;
                    rec.retained.iter().map(|&(f, _)| f).collect()
                }
            };
            let file = format!("query_r{row}_q{k}.smt2");
            std::fs::write(a.out.join(&file), export_smt2(&model, x, &fixed))?;
            let verdict = if flip_reachable(&model, x, &fixed).reachable {
                "sat"
            } else {
                "unsat"
            };
            let pairs: Vec<(usize, f64)> = fixed.iter().map(|&f| (f, x.values[f])).collect();
            queries.push(json!({
                "file": file,
                "row": row,
                "fixed": fixed.iter().map(|&f| model.features()[f].as_str()).collect::<Vec<_>>(),
                "pinned": render_pairs(model.features(), &pairs),
                "expected": verdict,
            }));
        }
    }
    let manifest = json!({
        "config": config_echo("export-smt", a.seed, json!({})),
        "queries": queries,
    });
    write_json(&a.out.join("manifest.json"), &manifest)?;
    println!("wrote {} queries to {}", queries.len(), a.out.display());
    Ok(())
}
