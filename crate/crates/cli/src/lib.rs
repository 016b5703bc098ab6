//! Experiment harness for detector tomography.
//!
//! The `qdt` binary is a thin wrapper around [`run`]. Every command writes its
//! outputs and a `manifest.json` into `--out-dir`:
//!
//! | command     | artifacts                                                     |
//! |-------------|---------------------------------------------------------------|
//! | `simulate`  | `probes.csv`, `povm_true.csv`, `dataset.csv`                  |
//! | `fit`       | `povm_hat.csv` (or `povm_hat_{j}_re/im.csv`), `loss_history.csv`, `timings.json` |
//! | `benchmark` | `benchmark.csv`                                               |
//! | `fidelity`  | `fidelity.json`                                               |
//!
//! Matrices are headerless CSV; see [`matrix_io`].

pub mod benchmark;
pub mod config;
mod error;
pub mod fidelity;
pub mod fit;
pub mod manifest;
pub mod matrix_io;
pub mod simulate;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

pub use config::{BenchmarkKind, RunConfig, Solver};
pub use error::{CliError, CliResult};
pub use manifest::RunManifest;

pub const PROBES_FILE: &str = "probes.csv";
pub const TRUTH_FILE: &str = "povm_true.csv";
pub const DATASET_FILE: &str = "dataset.csv";

#[derive(Debug, Parser)]
#[command(name = "qdt", version, about = "Detector tomography by gradient descent")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a detector and write probes, true POVM and dataset.
    Simulate(RunArgs),
    /// Reconstruct the POVM from a simulated or measured dataset.
    Fit(RunArgs),
    /// Sweep M, σ or D and compare both diagonal solvers.
    Benchmark(RunArgs),
    /// Average fidelity between two diagonal POVM files.
    Fidelity(FidelityArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Flat JSON configuration or a previous run's manifest.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "qdt-out")]
    pub out_dir: PathBuf,
    /// Directory produced by `simulate` (fit only).
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub solver: Option<Solver>,
    #[arg(long)]
    pub hilbert_dim: Option<usize>,
    #[arg(long)]
    pub outcomes: Option<usize>,
    #[arg(long)]
    pub probes: Option<usize>,
    #[arg(long)]
    pub phases: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub shots: Option<u64>,
    #[arg(long)]
    pub tail_bound: Option<f64>,
    /// Benchmark sweep variable.
    #[arg(long, value_enum)]
    pub kind: Option<BenchmarkKind>,
    /// Comma-separated benchmark grid.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct FidelityArgs {
    #[arg(long)]
    pub estimate: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value = "qdt-out")]
    pub out_dir: PathBuf,
}

impl RunArgs {
    /// Flags that were given, as a configuration layer.
    pub fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        macro_rules! put {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    m.insert(stringify!($field).into(), serde_json::to_value(v).expect("flag values serialize"));
                }
            )*};
        }
        put!(
            solver,
            hilbert_dim,
            outcomes,
            probes,
            phases,
            eta,
            sigma,
            lambda,
            epochs,
            batch_size,
            lr,
            lr_decay,
            seed,
            trials,
            shots,
            tail_bound,
            kind,
            grid
        );
        m
    }
}

/// What a successful command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub manifest: PathBuf,
    pub summary: String,
}

fn resolve_run(args: &RunArgs, base: Option<Map<String, Value>>) -> CliResult<RunConfig> {
    let mut layers = Vec::new();
    layers.extend(base);
    if let Some(path) = &args.config {
        layers.push(config::read_config_file(path)?.values);
    }
    layers.push(args.overrides());
    config::resolve(&layers)
}

pub fn run(cli: Cli) -> CliResult<Outcome> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = resolve_run(&args, None)?;
            let manifest = simulate::simulate(&cfg, &args.out_dir)?;
            Ok(Outcome { summary: format!("simulated dataset in {}", args.out_dir.display()), manifest })
        }
        Command::Fit(args) => {
            let from_manifest = match &args.config {
                Some(path) => config::read_config_file(path)?.data_dir,
                None => None,
            };
            let data_dir = args
                .data_dir
                .clone()
                .or(from_manifest)
                .ok_or_else(|| CliError::Config("fit needs --data-dir".into()))?;
            let data_manifest = data_dir.join(manifest::MANIFEST_FILE);
            let base =
                if data_manifest.exists() { Some(config::read_config_file(&data_manifest)?.values) } else { None };
            let cfg = resolve_run(&args, base)?;
            let manifest = fit::fit(&cfg, &data_dir, &args.out_dir)?;
            let written = RunManifest::read(&manifest)?;
            let summary = match written.fidelity_summary {
                Some(s) => format!("average fidelity {:.6} ± {:.6}", s.mean, s.stddev),
                None => format!("fit written to {}", args.out_dir.display()),
            };
            Ok(Outcome { manifest, summary })
        }
        Command::Benchmark(args) => {
            let cfg = resolve_run(&args, None)?;
            let manifest = benchmark::benchmark(&cfg, &args.out_dir)?;
            Ok(Outcome { summary: format!("benchmark written to {}", args.out_dir.display()), manifest })
        }
        Command::Fidelity(args) => {
            let (manifest, report) = fidelity::fidelity(&args.estimate, &args.truth, &args.out_dir)?;
            Ok(Outcome { summary: format!("average fidelity {:.12}", report.average), manifest })
        }
    }
}
