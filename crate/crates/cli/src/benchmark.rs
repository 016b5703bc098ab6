use std::path::{Path, PathBuf};

use qdt_core::metrics::mean_and_stddev;
use qdt_core::{
    average_fidelity, build_probe_grid, efficient_pnr_povm, fit_baseline, multi_start_fit, simulate_dataset, FitResult,
};
use serde::{Deserialize, Serialize};

use crate::config::{BenchmarkKind, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{OutputDir, RunManifest};

pub const BENCHMARK_FILE: &str = "benchmark.csv";

/// One line of `benchmark.csv`: a grid point, a solver, and the trial aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub kind: BenchmarkKind,
    pub grid_value: f64,
    pub solver: String,
    pub trials: usize,
    pub fidelity_mean: f64,
    pub fidelity_std: f64,
    pub wall_clock_total_s: f64,
    pub wall_clock_per_iteration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PointFidelity {
    grid_value: f64,
    solver: String,
    fidelity_mean: f64,
    fidelity_std: f64,
}

/// Configuration for one grid point of a sweep.
pub fn grid_point(cfg: &RunConfig, value: f64) -> CliResult<RunConfig> {
    let mut point = cfg.clone();
    let as_count = |what: &str| {
        if value.fract() != 0.0 || value < 2.0 || !value.is_finite() {
            Err(CliError::Config(format!("{what} grid value {value} is not an integer ≥ 2")))
        } else {
            Ok(value as usize)
        }
    };
    match cfg.kind {
        BenchmarkKind::Time => point.hilbert_dim = as_count("hilbert_dim")?,
        BenchmarkKind::Noise => point.sigma = value,
        BenchmarkKind::Data => point.probes = as_count("probes")?,
    }
    point.validate()?;
    Ok(point)
}

fn row(kind: BenchmarkKind, value: f64, solver: &str, results: &[FitResult], fidelities: &[f64]) -> BenchmarkRow {
    let (fidelity_mean, fidelity_std) = mean_and_stddev(fidelities);
    let totals: Vec<f64> = results.iter().map(|r| r.wall_clock_seconds).collect();
    let per_iteration: Vec<f64> = results.iter().map(|r| mean_and_stddev(&r.wall_clock_per_iteration).0).collect();
    BenchmarkRow {
        kind,
        grid_value: value,
        solver: solver.into(),
        trials: results.len(),
        fidelity_mean,
        fidelity_std,
        wall_clock_total_s: mean_and_stddev(&totals).0,
        wall_clock_per_iteration_s: mean_and_stddev(&per_iteration).0,
    }
}

/// Runs both diagonal solvers on identical data at every grid point.
pub fn run_sweep(cfg: &RunConfig) -> CliResult<Vec<BenchmarkRow>> {
    cfg.validate()?;
    if cfg.grid.is_empty() {
        return Err(CliError::Config("benchmark needs a nonempty grid".into()));
    }
    let mut rows = Vec::with_capacity(2 * cfg.grid.len());
    for &value in &cfg.grid {
        let point = grid_point(cfg, value)?;
        let probes = build_probe_grid(point.probes, point.hilbert_dim, point.tail_bound)?;
        let truth = efficient_pnr_povm(point.hilbert_dim, point.outcomes, point.eta)?;
        let data = simulate_dataset(&truth, &probes, point.sigma, point.seed, point.shots)?;

        let gd = multi_start_fit(&data, &probes, &point.fit_config(), point.trials, Some(&truth))?;
        let gd_fidelities: Vec<f64> =
            gd.summary.as_ref().map(|s| s.reports.iter().map(|r| r.average).collect()).unwrap_or_default();
        rows.push(row(cfg.kind, value, "gd", &gd.results, &gd_fidelities));

        let baseline = fit_baseline(&data, &probes, &point.baseline_config())?;
        let f = average_fidelity(&baseline.pi_hat, &truth)?.average;
        rows.push(row(cfg.kind, value, "baseline", std::slice::from_ref(&baseline), &[f]));
    }
    Ok(rows)
}

pub fn benchmark(cfg: &RunConfig, out_dir: &Path) -> CliResult<PathBuf> {
    let rows = run_sweep(cfg)?;
    let mut out = OutputDir::create(out_dir)?;
    let path = out.path(BENCHMARK_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::format(&path, e.to_string()))?;
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::format(&path, e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let mut manifest = RunManifest::new("benchmark", Some(cfg));
    manifest.solver = Some("gd+baseline".into());
    manifest.solver_label = Some(qdt_core::baseline::BASELINE_LABEL.into());
    manifest.seeds = (0..cfg.trials).map(|k| qdt_core::gd::trial_seed(cfg.seed, k)).collect();
    let fidelities: Vec<PointFidelity> = rows
        .iter()
        .map(|r| PointFidelity {
            grid_value: r.grid_value,
            solver: r.solver.clone(),
            fidelity_mean: r.fidelity_mean,
            fidelity_std: r.fidelity_std,
        })
        .collect();
    manifest.results = Some(serde_json::to_value(fidelities).map_err(|e| CliError::Config(e.to_string()))?);
    out.finish(manifest)
}
