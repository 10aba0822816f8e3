//! `ctan`: generate datasets, train and evaluate CTAN, run the spectral
//! checks and print dataset statistics.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use ctan_core::ctdg::{read_events_file, read_jodie_file, stream_stats, write_events_file, IngestOptions, Phase};
use ctan_core::datagen::{gen_path_dataset, gen_periodic_bipartite, PathGraphDataset, EVENTS_FILE, MANIFEST_FILE};
use ctan_core::harness::{
    evaluate_linkpred, evaluate_sequence, train_linkpred, train_sequence, JsonLines, Summary, Task,
};
use ctan_core::model::CtanModel;
use ctan_core::spectral::{verify_suite, VerifyOptions};
use ctan_core::Error;

use config::{apply_overrides, expand_grid, load_dataset, resolve, under_root, DataConfig, Dataset, RunConfig};

pub const EXIT_IO: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_TRAIN: u8 = 3;
pub const EXIT_VERIFY: u8 = 4;

/// A failed command: exit code and diagnostic.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    pub fn io(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            msg: msg.into(),
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            msg: msg.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) => EXIT_IO,
            Error::Divergence(_) | Error::Numeric(_) => EXIT_TRAIN,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::io(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "ctan",
    version,
    about = "Anti-symmetric temporal graph networks on event streams"
)]
struct Cli {
    /// Root for relative data paths.
    #[arg(long, env = "CTDG_DATA_DIR", global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset.
    #[command(subcommand)]
    Generate(Generate),
    /// Train from a run config, optionally over a grid of overrides.
    Train(TrainArgs),
    /// Score a checkpoint on the data of a run config.
    Eval(EvalArgs),
    /// Run the spectral checks; exits 4 when any fails.
    Verify(VerifyArgs),
    /// Dataset statistics as JSON.
    Stats(StatsArgs),
}

#[derive(Subcommand)]
enum Generate {
    /// Temporal path graphs for long-range sequence classification.
    Path {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Periodic user-item stream for link prediction.
    Periodic {
        #[arg(long, default_value_t = 10)]
        users: usize,
        #[arg(long, default_value_t = 10)]
        items: usize,
        /// Steps between partner shifts; omit for fixed partners.
        #[arg(long)]
        period: Option<u64>,
        #[arg(long, default_value_t = 5000)]
        events: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// JSON object of arrays (Cartesian product) or array of objects, keyed
    /// like `model.epsilon`.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Overrides `train.seeds`.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Run the seeds on separate threads.
    #[arg(long)]
    parallel: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Run config whose `data` block names the evaluation data.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Events per replay batch for link prediction.
    #[arg(long, default_value_t = 200)]
    batch_size: usize,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Shifts to check; repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Negative control: replaces the anti-symmetric part with a symmetric one.
    #[arg(long)]
    inject_symmetric: bool,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum StatsFormat {
    Auto,
    Events,
    Jodie,
    Path,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = StatsFormat::Auto)]
    format: StatsFormat,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let root = cli.data_dir.as_deref();
    let result = match cli.cmd {
        Command::Generate(g) => cmd_generate(g, root),
        Command::Train(a) => cmd_train(a, root),
        Command::Eval(a) => cmd_eval(a, root),
        Command::Verify(a) => cmd_verify(a),
        Command::Stats(a) => cmd_stats(a, root),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), Failure> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Failure::io(e.to_string()))?;
    fs::write(path, s + "\n").map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let s = fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&s).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(v: &T) -> Result<(), Failure> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Failure::io(e.to_string()))?;
    println!("{s}");
    Ok(())
}

fn cmd_generate(g: Generate, root: Option<&Path>) -> Result<(), Failure> {
    match g {
        Generate::Path { n, count, seed, out } => {
            let out = under_root(root, &out);
            gen_path_dataset(n, count, seed)?.write_dir(&out)?;
            eprintln!("wrote {count} path graphs with n = {n} to {}", out.display());
        }
        Generate::Periodic {
            users,
            items,
            period,
            events,
            seed,
            out,
        } => {
            let out = under_root(root, &out);
            let stream = gen_periodic_bipartite(users, items, period, events, seed)?;
            fs::create_dir_all(&out)?;
            write_events_file(&stream, &out.join(EVENTS_FILE))?;
            let manifest = json!({
                "kind": "periodic",
                "users": users,
                "items": items,
                "period": period,
                "events": events,
                "seed": seed,
            });
            write_json(&out.join(MANIFEST_FILE), &manifest)?;
            eprintln!("wrote {events} periodic events to {}", out.display());
        }
    }
    Ok(())
}

/// Validation and test metric of one finished seed.
#[derive(Clone, Debug, Serialize)]
struct SeedResult {
    seed: u64,
    best_epoch: usize,
    val: f64,
    test: f64,
}

fn metric_names(task: Task) -> (&'static str, &'static str) {
    match task {
        Task::SequenceCls => ("val_acc", "test_acc"),
        Task::LinkPred => ("val_auc", "test_auc"),
    }
}

fn run_seed(cfg: &RunConfig, data: &Dataset, seed: u64, dir: &Path) -> Result<SeedResult, Failure> {
    fs::create_dir_all(dir)?;
    let file = File::create(dir.join("metrics.jsonl"))?;
    let mut sink = JsonLines(BufWriter::new(file));
    let (model, r) = match data {
        Dataset::Path(d) => {
            let r = train_sequence(d, &cfg.model, &cfg.train, seed, &mut sink)?;
            let res = SeedResult {
                seed,
                best_epoch: r.best_epoch,
                val: r.val_acc,
                test: r.test_acc,
            };
            (r.model, res)
        }
        Dataset::Link {
            stream,
            split,
            negatives,
        } => {
            let r = train_linkpred(stream, split, negatives, &cfg.model, &cfg.train, seed, &mut sink)?;
            let res = SeedResult {
                seed,
                best_epoch: r.best_epoch,
                val: r.val_auc,
                test: r.test_auc,
            };
            (r.model, res)
        }
    };
    sink.0.flush()?;
    model.save(&dir.join("checkpoint.json"))?;
    Ok(r)
}

/// Trains every seed of one resolved config into `dir` and writes its
/// summary.
fn run_config(cfg: &RunConfig, data: &Dataset, dir: &Path, parallel: bool) -> Result<Value, Failure> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("config.json"), cfg)?;
    let seeds = &cfg.train.seeds;
    let results: Vec<Result<SeedResult, Failure>> = if parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = seeds
                .iter()
                .map(|&seed| s.spawn(move || run_seed(cfg, data, seed, &dir.join(format!("seed-{seed}")))))
                .collect();
            handles.into_iter().map(|h| h.join().expect("seed thread")).collect()
        })
    } else {
        seeds
            .iter()
            .map(|&seed| {
                eprintln!("training seed {seed} into {}", dir.display());
                run_seed(cfg, data, seed, &dir.join(format!("seed-{seed}")))
            })
            .collect()
    };
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let (val_name, test_name) = metric_names(data.task());
    let summary = json!({
        "task": data.task(),
        "seeds": results,
        "val": Summary::new(val_name, results.iter().map(|r| r.val).collect()),
        "test": Summary::new(test_name, results.iter().map(|r| r.test).collect()),
    });
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn cmd_train(a: TrainArgs, root: Option<&Path>) -> Result<(), Failure> {
    let mut raw = read_json(&a.config)?;
    if let Some(seeds) = &a.seeds {
        raw = apply_overrides(
            &raw,
            &serde_json::Map::from_iter([("train.seeds".to_string(), json!(seeds))]),
        )?;
    }
    let Some(grid) = &a.grid else {
        let (cfg, data) = resolve(&raw, root)?;
        let summary = run_config(&cfg, &data, &a.out, a.parallel)?;
        return print_json(&summary);
    };
    let points = expand_grid(&read_json(grid)?)?;
    if points.is_empty() {
        return Err(Failure::usage("grid has no points"));
    }
    // Resolve every point before training so a bad point fails fast.
    let mut resolved = Vec::new();
    for p in &points {
        resolved.push(resolve(&apply_overrides(&raw, p)?, root)?);
    }
    fs::create_dir_all(&a.out)?;
    let mut runs = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for (i, ((cfg, data), p)) in resolved.iter().zip(&points).enumerate() {
        let name = format!("run-{i:03}");
        let summary = run_config(cfg, data, &a.out.join(&name), a.parallel)?;
        let val = summary["val"]["mean"].as_f64().unwrap_or(f64::NAN);
        if best.is_none_or(|(_, b)| val > b) {
            best = Some((i, val));
        }
        runs.push(json!({
            "run": name,
            "overrides": p,
            "val_mean": val,
            "test_mean": summary["test"]["mean"],
        }));
    }
    let (bi, _) = best.expect("non-empty grid");
    let report = json!({
        "runs": runs,
        "best": runs[bi]["run"],
        "selected_by": metric_names(resolved[0].1.task()).0,
    });
    write_json(&a.out.join("grid.json"), &report)?;
    print_json(&report)
}

fn cmd_eval(a: EvalArgs, root: Option<&Path>) -> Result<(), Failure> {
    if !a.checkpoint.exists() {
        return Err(Failure::io(format!("checkpoint not found: {}", a.checkpoint.display())));
    }
    let model = CtanModel::load(&a.checkpoint)?;
    let raw = read_json(&a.config)?;
    let data: DataConfig = serde_json::from_value(raw.get("data").cloned().unwrap_or(Value::Null))
        .map_err(|e| Failure::usage(format!("data block: {e}")))?;
    let report = match load_dataset(&data, root)? {
        Dataset::Path(d) => {
            let val = &d.instances[d.split.range(Phase::Val)];
            let test = &d.instances[d.split.range(Phase::Test)];
            let (vl, va, _) = evaluate_sequence(&model, val, a.seed)?;
            let (tl, ta, _) = evaluate_sequence(&model, test, a.seed)?;
            json!({"task": Task::SequenceCls, "val": {"loss": vl, "acc": va}, "test": {"loss": tl, "acc": ta}})
        }
        Dataset::Link {
            stream,
            split,
            negatives,
        } => {
            let ev = evaluate_linkpred(&model, &stream, &split, &negatives, a.batch_size, a.seed)?;
            json!({"task": Task::LinkPred, "val": {"auc": ev.val_auc()?}, "test": {"auc": ev.test_auc()?}})
        }
    };
    print_json(&report)
}

fn cmd_verify(a: VerifyArgs) -> Result<(), Failure> {
    let defaults = VerifyOptions::default();
    let opts = VerifyOptions {
        seed: a.seed,
        count: a.count,
        dim: a.dim,
        gammas: a.gamma.unwrap_or(defaults.gammas),
        steps: a.steps,
        symmetric_fault: a.inject_symmetric,
    };
    let report = verify_suite(&opts)?;
    if let Some(p) = &a.out {
        write_json(p, &report)?;
    }
    print_json(&report)?;
    if report.all_pass() {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        Err(Failure {
            code: EXIT_VERIFY,
            msg: format!("failed checks: {}", failed.join(", ")),
        })
    }
}

fn cmd_stats(a: StatsArgs, root: Option<&Path>) -> Result<(), Failure> {
    let path = under_root(root, &a.data);
    if !path.exists() {
        return Err(Failure::io(format!("data not found: {}", path.display())));
    }
    let format = match a.format {
        StatsFormat::Auto if path.is_dir() && path.join("labels.json").exists() => StatsFormat::Path,
        StatsFormat::Auto => {
            let file = if path.is_dir() {
                path.join(EVENTS_FILE)
            } else {
                path.clone()
            };
            let head = fs::read_to_string(&file)?.lines().next().unwrap_or("").to_string();
            if head.starts_with("t,src,dst,kind") {
                StatsFormat::Events
            } else {
                StatsFormat::Jodie
            }
        }
        f => f,
    };
    let stream = match format {
        StatsFormat::Path => PathGraphDataset::read_dir(&path)?.combined_stream()?,
        StatsFormat::Events if path.is_dir() => read_events_file(&path.join(EVENTS_FILE), IngestOptions::default())?,
        StatsFormat::Events => read_events_file(&path, IngestOptions::default())?,
        _ => read_jodie_file(&path)?,
    };
    let s = stream_stats(&stream);
    print_json(&json!({
        "events": stream.len(),
        "nodes": s.nodes,
        "edges": s.edges,
        "node_events": s.node_events,
        "node_feature_dim": s.node_feature_dim,
        "edge_feature_dim": s.edge_feature_dim,
        "split": s.split,
        "surprise_index": s.surprise_index,
        "surprise_defined": s.surprise_index.is_some(),
    }))
}
