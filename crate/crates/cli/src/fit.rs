use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use qdt_core::baseline::BASELINE_LABEL;
use qdt_core::gd::SolverConfig;
use qdt_core::metrics::mean_and_stddev;
use qdt_core::stiefel::{fit_phase_sensitive, CoherentProbe, PhaseSensitiveDataset};
use qdt_core::{
    average_fidelity, fit_baseline, matrix_fidelity_oracle, multi_start_fit, Dataset, DiagonalPovm, FidelityReport,
    FitResult, ProbeSet, QdtError,
};

use crate::config::{RunConfig, Solver};
use crate::error::{CliError, CliResult};
use crate::manifest::{relative_path, FidelitySummary, OutputDir, RunManifest, TrialRecord, TrialTiming, TIMINGS_FILE};
use crate::matrix_io::read_matrix;
use crate::{DATASET_FILE, PROBES_FILE, TRUTH_FILE};

pub const ESTIMATE_FILE: &str = "povm_hat.csv";
pub const LOSS_FILE: &str = "loss_history.csv";

struct Inputs {
    probe_table: DMatrix<f64>,
    probs: DMatrix<f64>,
    truth: Option<DiagonalPovm>,
}

fn load_inputs(cfg: &RunConfig, data_dir: &Path) -> CliResult<Inputs> {
    let probe_table = read_matrix(&data_dir.join(PROBES_FILE))?;
    let probs = read_matrix(&data_dir.join(DATASET_FILE))?;
    let truth_path = data_dir.join(TRUTH_FILE);
    let truth = if truth_path.exists() { Some(DiagonalPovm::new(read_matrix(&truth_path)?)?) } else { None };

    if probe_table.ncols() != 2 {
        return Err(CliError::format(data_dir.join(PROBES_FILE), "expected two columns (mean photon number, phase)"));
    }
    if probe_table.nrows() != probs.nrows() {
        return Err(CliError::Config(format!("{} probes but {} dataset rows", probe_table.nrows(), probs.nrows())));
    }
    if probs.ncols() != cfg.outcomes {
        return Err(CliError::Config(format!(
            "dataset has {} outcomes but outcomes = {}",
            probs.ncols(),
            cfg.outcomes
        )));
    }
    if let Some(t) = &truth {
        if t.pi().shape() != (cfg.hilbert_dim, cfg.outcomes) {
            return Err(CliError::Config(format!(
                "ground truth is {:?} but the configuration expects ({}, {})",
                t.pi().shape(),
                cfg.hilbert_dim,
                cfg.outcomes
            )));
        }
    }
    Ok(Inputs { probe_table, probs, truth })
}

/// Fits the dataset in `data_dir` and writes the estimate under `out_dir`.
pub fn fit(cfg: &RunConfig, data_dir: &Path, out_dir: &Path) -> CliResult<PathBuf> {
    cfg.validate()?;
    let inputs = load_inputs(cfg, data_dir)?;
    let mut out = OutputDir::create(out_dir)?;
    let mut manifest = RunManifest::new("fit", Some(cfg));
    manifest.data_dir = Some(relative_path(data_dir, out_dir)?);

    match cfg.solver {
        Solver::Gd | Solver::Baseline => {
            let mu: Vec<f64> = inputs.probe_table.column(0).iter().copied().collect();
            let probes = ProbeSet::from_mean_photon_numbers(mu, cfg.hilbert_dim)?;
            let dataset = Dataset::from_probs(inputs.probs, &probes)?;
            manifest.probe_fingerprint = Some(probes.fingerprint());
            let results = if cfg.solver == Solver::Gd {
                multi_start_fit(&dataset, &probes, &cfg.fit_config(), cfg.trials, None)?.results
            } else {
                manifest.solver_label = Some(BASELINE_LABEL.into());
                vec![fit_baseline(&dataset, &probes, &cfg.baseline_config())?]
            };
            write_diagonal(&mut out, &mut manifest, results, inputs.truth.as_ref())?;
        }
        Solver::Stiefel => write_phase_sensitive(cfg, &mut out, &mut manifest, inputs)?,
    }
    out.finish(manifest)
}

// Index of the trial with the lowest final loss; the first one on ties.
fn best_trial(histories: &[&[f64]]) -> usize {
    let mut best = 0;
    for (k, h) in histories.iter().enumerate() {
        let last = h.last().copied().unwrap_or(f64::INFINITY);
        let current = histories[best].last().copied().unwrap_or(f64::INFINITY);
        if last < current {
            best = k;
        }
    }
    best
}

fn loss_matrix(histories: &[&[f64]]) -> DMatrix<f64> {
    let rows = histories.iter().map(|h| h.len()).max().unwrap_or(0);
    DMatrix::from_fn(rows, histories.len(), |i, k| histories[k].get(i).copied().unwrap_or(f64::NAN))
}

fn summarize(reports: &[Option<FidelityReport>]) -> Option<FidelitySummary> {
    let averages: Option<Vec<f64>> = reports.iter().map(|r| r.as_ref().map(|r| r.average)).collect();
    averages.map(|a| {
        let (mean, stddev) = mean_and_stddev(&a);
        FidelitySummary { mean, stddev }
    })
}

fn write_diagonal(
    out: &mut OutputDir,
    manifest: &mut RunManifest,
    results: Vec<FitResult>,
    truth: Option<&DiagonalPovm>,
) -> CliResult<()> {
    let reports = results
        .iter()
        .map(|r| truth.map(|t| average_fidelity(&r.pi_hat, t)).transpose())
        .collect::<Result<Vec<_>, QdtError>>()?;
    let histories: Vec<&[f64]> = results.iter().map(|r| r.loss_history.as_slice()).collect();
    let best = best_trial(&histories);

    out.matrix(ESTIMATE_FILE, results[best].pi_hat.pi())?;
    out.matrix(LOSS_FILE, &loss_matrix(&histories))?;
    let timings: Vec<TrialTiming> = results
        .iter()
        .map(|r| TrialTiming {
            seed: r.seed,
            wall_clock_seconds: r.wall_clock_seconds,
            wall_clock_per_iteration: r.wall_clock_per_iteration.clone(),
        })
        .collect();
    out.json(TIMINGS_FILE, &timings)?;

    manifest.solver_config = Some(solver_config_json(&results[0].config_echo)?);
    manifest.seeds = results.iter().filter_map(|r| r.seed).collect();
    manifest.fidelity_summary = summarize(&reports);
    manifest.selected_trial = Some(best);
    manifest.trials = results
        .into_iter()
        .zip(reports)
        .map(|(r, fidelity)| TrialRecord { seed: r.seed, fidelity, loss_history: r.loss_history })
        .collect();
    Ok(())
}

fn solver_config_json(config: &SolverConfig) -> CliResult<serde_json::Value> {
    serde_json::to_value(config).map_err(|e| CliError::Config(e.to_string()))
}

fn lift(values: &[f64]) -> DMatrix<Complex64> {
    DMatrix::from_diagonal(&DVector::from_iterator(values.len(), values.iter().map(|x| Complex64::new(*x, 0.0))))
}

fn write_phase_sensitive(
    cfg: &RunConfig,
    out: &mut OutputDir,
    manifest: &mut RunManifest,
    inputs: Inputs,
) -> CliResult<()> {
    let probes: Vec<CoherentProbe> =
        inputs.probe_table.row_iter().map(|r| CoherentProbe { mean_photon_number: r[0], phase: r[1] }).collect();
    let dataset = PhaseSensitiveDataset::new(inputs.probs, probes, cfg.hilbert_dim)?;

    let mut fits = Vec::with_capacity(cfg.trials);
    let mut timings = Vec::with_capacity(cfg.trials);
    let mut reports = Vec::with_capacity(cfg.trials);
    for k in 0..cfg.trials as u64 {
        let seed = cfg.seed + k;
        let phase_config = cfg.phase_config(seed)?;
        let start = Instant::now();
        let result = fit_phase_sensitive(&dataset, &phase_config)?;
        let elapsed = start.elapsed().as_secs_f64();
        timings.push(TrialTiming {
            seed: Some(seed),
            wall_clock_seconds: elapsed,
            wall_clock_per_iteration: Vec::new(),
        });
        reports.push(match &inputs.truth {
            Some(t) => Some(phase_sensitive_report(&result.elements, t)?),
            None => None,
        });
        if k == 0 {
            manifest.solver_config =
                Some(serde_json::to_value(&phase_config).map_err(|e| CliError::Config(e.to_string()))?);
        }
        fits.push((seed, result));
    }

    let histories: Vec<&[f64]> = fits.iter().map(|(_, f)| f.loss_history.as_slice()).collect();
    let best = best_trial(&histories);
    for (j, e) in fits[best].1.elements.iter().enumerate() {
        out.matrix(&format!("povm_hat_{j}_re.csv"), &e.map(|z| z.re))?;
        out.matrix(&format!("povm_hat_{j}_im.csv"), &e.map(|z| z.im))?;
    }
    out.matrix(LOSS_FILE, &loss_matrix(&histories))?;
    out.json(TIMINGS_FILE, &timings)?;

    manifest.seeds = fits.iter().map(|(s, _)| *s).collect();
    manifest.fidelity_summary = summarize(&reports);
    manifest.selected_trial = Some(best);
    manifest.trials = fits
        .into_iter()
        .zip(reports)
        .map(|((seed, f), fidelity)| TrialRecord { seed: Some(seed), fidelity, loss_history: f.loss_history })
        .collect();
    Ok(())
}

fn phase_sensitive_report(elements: &[DMatrix<Complex64>], truth: &DiagonalPovm) -> CliResult<FidelityReport> {
    let per_element = elements
        .iter()
        .enumerate()
        .map(|(j, e)| match matrix_fidelity_oracle(&lift(&truth.element(j)), e) {
            Ok(f) => Ok(Some(f)),
            Err(QdtError::UndefinedFidelity(_)) => Ok(None),
            Err(err) => Err(err),
        })
        .collect::<Result<Vec<_>, QdtError>>()?;
    Ok(FidelityReport::from_elements(per_element)?)
}
