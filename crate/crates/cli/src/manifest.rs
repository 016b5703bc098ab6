//! Run manifests and the output directory that collects artifacts.
//!
//! `manifest.json` holds only deterministic content, so two runs with the
//! same configuration produce identical bytes. Wall-clock measurements go to
//! `timings.json`, which the manifest lists as an artifact.

use std::fs;
use std::path::{Component, Path, PathBuf};

use nalgebra::DMatrix;
use qdt_core::FidelityReport;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::matrix_io::write_matrix;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub(crate) const TOOL_KEY: &str = "tool";
pub const TOOL_NAME: &str = "qdt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: Option<u64>,
    pub fidelity: Option<FidelityReport>,
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelitySummary {
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
    /// Exact parameters handed to the solver, when one ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_config: Option<Value>,
    pub seeds: Vec<u64>,
    /// Input directory relative to the manifest's own directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trials: Vec<TrialRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity_summary: Option<FidelitySummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_trial: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results: Option<Value>,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: Option<&RunConfig>) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            solver: config.map(|c| c.solver.label().into()),
            solver_label: None,
            config: config.cloned(),
            solver_config: None,
            seeds: config.map(|c| vec![c.seed]).unwrap_or_default(),
            data_dir: None,
            probe_fingerprint: None,
            trials: Vec::new(),
            fidelity_summary: None,
            selected_trial: None,
            results: None,
            artifacts: Vec::new(),
        }
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTiming {
    pub seed: Option<u64>,
    pub wall_clock_seconds: f64,
    pub wall_clock_per_iteration: Vec<f64>,
}

/// Files written so far under one output directory.
///
/// Dropping it without calling [`OutputDir::finish`] deletes everything it
/// wrote, so a failed command leaves no partial results behind.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
    finished: bool,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new(), finished: false })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn matrix(&mut self, name: &str, m: &DMatrix<f64>) -> CliResult<()> {
        let path = self.root.join(name);
        self.track(name);
        write_matrix(&path, m)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let path = self.root.join(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::format(&path, e.to_string()))?;
        text.push('\n');
        self.track(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    /// Registers `name` as an artifact and returns its full path.
    pub fn path(&mut self, name: &str) -> PathBuf {
        self.track(name);
        self.root.join(name)
    }

    pub fn text(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.root.join(name);
        self.track(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
    }

    pub fn artifacts(&self) -> Vec<String> {
        self.written.clone()
    }

    /// Writes the manifest (listing every earlier artifact) and keeps all files.
    pub fn finish(mut self, mut manifest: RunManifest) -> CliResult<PathBuf> {
        manifest.artifacts = self.artifacts();
        self.json(MANIFEST_FILE, &manifest)?;
        self.finished = true;
        Ok(self.root.join(MANIFEST_FILE))
    }

    fn track(&mut self, name: &str) {
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if !self.finished {
            for name in &self.written {
                let _ = fs::remove_file(self.root.join(name));
            }
        }
    }
}

/// `target` expressed relative to `base`; both must exist.
pub fn relative_path(target: &Path, base: &Path) -> CliResult<String> {
    let t = fs::canonicalize(target).map_err(|e| CliError::io(target, e))?;
    let b = fs::canonicalize(base).map_err(|e| CliError::io(base, e))?;
    let tc: Vec<Component> = t.components().collect();
    let bc: Vec<Component> = b.components().collect();
    let common = tc.iter().zip(&bc).take_while(|(x, y)| x == y).count();
    let mut rel = PathBuf::new();
    for _ in common..bc.len() {
        rel.push("..");
    }
    for c in &tc[common..] {
        rel.push(c.as_os_str());
    }
    if rel.as_os_str().is_empty() {
        rel.push(".");
    }
    Ok(rel.to_string_lossy().replace('\\', "/"))
}
