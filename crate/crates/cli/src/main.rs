mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use config::{Overrides, RunConfig};
use curvgnn::{seed_sweep, stochastic_block_model, train, write_graph, Checkpoint, Error, ManifoldSet, SbmConfig, TrainConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "curvgnn", version, about = "Train, evaluate and diagnose graph neural networks over Euclidean, hyperbolic and spherical spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override a training setting, e.g. `epochs=50`; dotted keys address the whole file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["nc", "lp"])]
    task: Option<String>,
    #[arg(long)]
    manifolds: Option<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Error> {
        let overrides = Overrides { set: self.set.clone(), seed: self.seed, task: self.task.clone(), manifolds: self.manifolds.clone() };
        Ok(RunConfig::load(&self.config, &overrides)?.0)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load and check a dataset, then write its split manifest and statistics.
    Preprocess(Common),
    /// Train one model; writes metrics.json and checkpoint.json.
    Train(Common),
    /// Re-evaluate a checkpoint on the dataset named in the configuration.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train once per seed and measure embedding stability; writes stability.json.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Comma-separated seeds; defaults to the configuration's `seeds` or 0..10.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Train every manifold subset with a shared seed; writes ablation.csv.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Also sweep these coreset sizes with the configured subset; writes coreset_sweep.csv.
        #[arg(long, value_delimiter = ',')]
        coreset_sizes: Option<Vec<usize>>,
    },
    /// Write a synthetic block-model dataset and a matching configuration.
    Synth {
        #[arg(long, default_value_t = 300)]
        nodes: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 64)]
        features: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Divergence { .. } => 3,
        _ => 2,
    }
}

/// Writes through a temporary file and a rename so readers never see partial output.
fn write_atomic(path: &Path, body: &str) -> Result<(), Error> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, body).map_err(|e| Error::Io { path: tmp.clone(), message: e.to_string() })?;
    fs::rename(&tmp, path).map_err(|e| Error::Io { path: path.to_path_buf(), message: e.to_string() })
}

fn out_dir(dir: &Path) -> Result<&Path, Error> {
    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), message: e.to_string() })?;
    Ok(dir)
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn preprocess(c: &Common) -> Result<(), Error> {
    let cfg = c.load()?;
    let (g, stats) = cfg.graph()?;
    let split = cfg.split(&g)?;
    let dir = out_dir(&c.out)?;
    write_atomic(&dir.join("split.json"), &(split.to_json() + "\n"))?;
    let summary = json!({
        "nodes": g.num_nodes,
        "edges": g.edges.len(),
        "edge_lines": stats.edge_lines,
        "duplicate_edges": stats.duplicate_edges,
        "self_loops": stats.self_loops,
        "features": g.feature_dim(),
        "classes": g.num_classes,
        "labeled": g.labeled_nodes().len(),
    });
    write_atomic(&dir.join("stats.json"), &pretty(&summary))?;
    println!("{}", serde_json::to_string(&summary).expect("json"));
    Ok(())
}

fn cmd_train(c: &Common) -> Result<(), Error> {
    let cfg = c.load()?;
    let (g, _) = cfg.graph()?;
    let split = cfg.split(&g)?;
    let (report, checkpoint) = train(&g, &split, &cfg.train)?;
    let dir = out_dir(&c.out)?;
    write_atomic(&dir.join("checkpoint.json"), &checkpoint.to_json())?;
    write_atomic(&dir.join("metrics.json"), &pretty(&report))?;
    eprintln!(
        "{} = {:.4} (val {:.4}, best epoch {} of {})",
        report.metric_name.name(),
        report.test_metric,
        report.best_val_metric,
        report.best_epoch,
        report.epochs_run
    );
    Ok(())
}

fn eval(c: &Common, checkpoint: &Path) -> Result<(), Error> {
    let cfg = c.load()?;
    let text = fs::read_to_string(checkpoint).map_err(|e| Error::Io { path: checkpoint.to_path_buf(), message: e.to_string() })?;
    let ckpt = Checkpoint::from_json(&text).map_err(|e| Error::Io { path: checkpoint.to_path_buf(), message: e.to_string() })?;
    let (g, _) = cfg.graph()?;
    let result = ckpt.evaluate(&g)?;
    let body = json!({
        "metric_name": result.metric_name,
        "val": result.val,
        "test": result.test,
        "recorded_test": ckpt.test_metric,
        "matches_recorded": result.test == ckpt.test_metric,
        "metrics": { result.metric_name.name(): result.test },
    });
    write_atomic(&out_dir(&c.out)?.join("eval.json"), &pretty(&body))?;
    println!("{}", serde_json::to_string(&body).expect("json"));
    Ok(())
}

fn diagnose(c: &Common, seeds: Option<&[u64]>, jobs: usize) -> Result<(), Error> {
    let cfg = c.load()?;
    let seeds: Vec<u64> = seeds.map(<[u64]>::to_vec).or(cfg.seeds.clone()).unwrap_or_else(|| (0..10).collect());
    let (g, _) = cfg.graph()?;
    let split = cfg.split(&g)?;
    let report = seed_sweep(&g, &split, &cfg.train, &seeds, jobs)?;
    let dir = out_dir(&c.out)?;
    write_atomic(&dir.join("stability.json"), &pretty(&report))?;
    write_atomic(&dir.join("centroid_pairs.csv"), &report.pairs_csv())?;
    if !report.complete {
        eprintln!("warning: {} of {} runs failed", report.failed.len(), seeds.len());
    }
    eprintln!("offset {:?}, scale {:?}, normalized offset {:?}", report.offset, report.scale, report.normalized_offset);
    Ok(())
}

fn ablate(c: &Common, coreset_sizes: Option<&[usize]>) -> Result<(), Error> {
    let cfg = c.load()?;
    let (g, _) = cfg.graph()?;
    let split = cfg.split(&g)?;
    let row = |label: String, tc: &TrainConfig| -> Result<String, Error> {
        let (report, _) = train(&g, &split, tc)?;
        eprintln!("{label}: {} = {:.4}", report.metric_name.name(), report.test_metric);
        Ok(format!("{label},{},{},{}\n", report.metric_name.name(), report.test_metric, tc.seed))
    };
    let mut csv = String::from("manifolds,metric,value,seed\n");
    for m in ManifoldSet::all() {
        csv.push_str(&row(m.to_string(), &TrainConfig { manifolds: m, ..cfg.train.clone() })?);
    }
    let dir = out_dir(&c.out)?;
    write_atomic(&dir.join("ablation.csv"), &csv)?;
    if let Some(sizes) = coreset_sizes {
        let mut sweep = String::from("coreset_size,metric,value,seed\n");
        for &k in sizes {
            sweep.push_str(&row(k.to_string(), &TrainConfig { coreset_size: k, ..cfg.train.clone() })?);
        }
        write_atomic(&dir.join("coreset_sweep.csv"), &sweep)?;
    }
    Ok(())
}

fn synth(nodes: usize, classes: usize, features: usize, seed: u64, out: &Path) -> Result<(), Error> {
    let g = stochastic_block_model(&SbmConfig {
        nodes,
        classes,
        feature_dim: features,
        degree_in: 4.0,
        degree_out: 1.0,
        words_per_node: 8,
        feature_signal: 0.6,
        seed,
    })?;
    let dir = out_dir(out)?;
    write_graph(&g, dir)?;
    let cfg = json!({
        "dataset": { "edges": "edges.txt", "features": "features.txt", "labels": "labels.txt" },
        "split": { "policy": { "fractional": { "train": 0.5, "val": 0.25 } }, "seed": 0 },
        "train": { "epochs": 200, "patience": 50, "hidden_dim": 32, "coreset_size": 32, "candidates": 400 },
    });
    write_atomic(&dir.join("config.json"), &pretty(&cfg))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Preprocess(c) => preprocess(c),
        Command::Train(c) => cmd_train(c),
        Command::Eval { common, checkpoint } => eval(common, checkpoint),
        Command::Diagnose { common, seeds, jobs } => diagnose(common, seeds.as_deref(), *jobs),
        Command::Ablate { common, coreset_sizes } => ablate(common, coreset_sizes.as_deref()),
        Command::Synth { nodes, classes, features, seed, out } => synth(*nodes, *classes, *features, *seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
