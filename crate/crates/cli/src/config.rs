//! Run configuration.
//!
//! A run is described by one flat JSON object. Layers are merged key by key
//! in increasing priority: built-in defaults, the manifest of the input data
//! directory (for `fit`), the `--config` file, then command-line flags. A
//! `--config` file may also be a previous run's manifest, in which case its
//! `config` object is used.

use std::path::Path;

use clap::ValueEnum;
use qdt_core::gd::DecayInterval;
use qdt_core::stiefel::PhaseSensitiveConfig;
use qdt_core::{BaselineConfig, FitConfig};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    #[default]
    Gd,
    Baseline,
    Stiefel,
}

impl Solver {
    pub fn label(self) -> &'static str {
        match self {
            Solver::Gd => "gd",
            Solver::Baseline => "baseline",
            Solver::Stiefel => "stiefel",
        }
    }
}

/// Which quantity a benchmark sweeps over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkKind {
    /// Hilbert-space dimension `M`.
    #[default]
    Time,
    /// Amplitude-noise standard deviation `σ`.
    Noise,
    /// Number of probes `D`.
    Data,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub solver: Solver,
    pub hilbert_dim: usize,
    pub outcomes: usize,
    /// Probe count `D`; for the phase-sensitive solver, the number of distinct
    /// mean photon numbers, each measured at `phases` phases.
    pub probes: usize,
    pub phases: usize,
    pub eta: f64,
    pub sigma: f64,
    pub shots: Option<u64>,
    pub tail_bound: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_interval: DecayInterval,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub init_stddev: f64,
    pub seed: u64,
    pub trials: usize,
    pub baseline_step: f64,
    pub baseline_iterations: usize,
    pub stiefel_iterations: usize,
    pub stiefel_gamma: f64,
    pub stiefel_gamma_decay: f64,
    pub kind: BenchmarkKind,
    pub grid: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let gd = FitConfig::default();
        let baseline = BaselineConfig::default();
        let phase = PhaseSensitiveConfig::default();
        Self {
            solver: Solver::Gd,
            hilbert_dim: 60,
            outcomes: 10,
            probes: 600,
            phases: 1,
            eta: 1.0,
            sigma: 0.0,
            shots: None,
            tail_bound: qdt_core::fock::DEFAULT_TAIL_BOUND,
            lambda: gd.lambda,
            epochs: gd.epochs,
            batch_size: gd.batch_size,
            lr: gd.learning_rate,
            lr_decay: gd.lr_decay,
            decay_interval: gd.decay_interval,
            beta1: gd.beta1,
            beta2: gd.beta2,
            adam_epsilon: gd.epsilon,
            init_stddev: gd.init_stddev,
            seed: gd.seed,
            trials: 1,
            baseline_step: baseline.step_size,
            baseline_iterations: baseline.iterations,
            stiefel_iterations: phase.iterations,
            stiefel_gamma: phase.gamma,
            stiefel_gamma_decay: phase.gamma_decay,
            kind: BenchmarkKind::Time,
            grid: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> CliResult<()> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.hilbert_dim < 2 {
            return fail(format!("hilbert_dim must be at least 2, got {}", self.hilbert_dim));
        }
        if self.outcomes < 2 || self.outcomes > self.hilbert_dim {
            return fail(format!("outcomes must lie in [2, hilbert_dim], got {}", self.outcomes));
        }
        if self.probes < 2 {
            return fail(format!("probes must be at least 2, got {}", self.probes));
        }
        if self.phases == 0 {
            return fail("phases must be positive".into());
        }
        if self.trials == 0 {
            return fail("trials must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return fail(format!("eta must lie in [0, 1], got {}", self.eta));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return fail(format!("sigma must be finite and nonnegative, got {}", self.sigma));
        }
        if !(self.tail_bound > 0.0 && self.tail_bound < 1.0) {
            return fail(format!("tail_bound must lie in (0, 1), got {}", self.tail_bound));
        }
        Ok(())
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            learning_rate: self.lr,
            lr_decay: self.lr_decay,
            decay_interval: self.decay_interval,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lambda: self.lambda,
            seed: self.seed,
            init_stddev: self.init_stddev,
        }
    }

    pub fn baseline_config(&self) -> BaselineConfig {
        BaselineConfig { step_size: self.baseline_step, iterations: self.baseline_iterations, lambda: self.lambda }
    }

    pub fn phase_config(&self, seed: u64) -> CliResult<PhaseSensitiveConfig> {
        Ok(PhaseSensitiveConfig {
            block_ranks: PhaseSensitiveConfig::pnr_ranks(self.hilbert_dim, self.outcomes)?,
            iterations: self.stiefel_iterations,
            gamma: self.stiefel_gamma,
            gamma_decay: self.stiefel_gamma_decay,
            seed,
        })
    }
}

/// Contents of a `--config` file.
#[derive(Debug, Clone)]
pub struct ConfigFile {
    pub values: Map<String, Value>,
    /// `data_dir` recorded in a manifest, resolved against the manifest's directory.
    pub data_dir: Option<std::path::PathBuf>,
}

pub fn read_config_file(path: &Path) -> CliResult<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))?;
    let Value::Object(mut object) = value else {
        return Err(CliError::format(path, "expected a JSON object"));
    };
    if object.contains_key(crate::manifest::TOOL_KEY) {
        let data_dir = match object.get("data_dir") {
            Some(Value::String(rel)) => Some(path.parent().unwrap_or(Path::new(".")).join(rel)),
            _ => None,
        };
        return match object.remove("config") {
            Some(Value::Object(values)) => Ok(ConfigFile { values, data_dir }),
            _ => Err(CliError::format(path, "manifest has no config object")),
        };
    }
    Ok(ConfigFile { values: object, data_dir: None })
}

/// Merges `layers` over the defaults; later layers win.
pub fn resolve(layers: &[Map<String, Value>]) -> CliResult<RunConfig> {
    let mut merged = match serde_json::to_value(RunConfig::default()) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("RunConfig serializes to an object"),
    };
    for layer in layers {
        for (k, v) in layer {
            merged.insert(k.clone(), v.clone());
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Config(e.to_string()))
}
