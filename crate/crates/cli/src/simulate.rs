use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use qdt_core::stiefel::{phase_probe_grid, PhaseSensitiveDataset};
use qdt_core::{build_probe_grid, efficient_pnr_povm, simulate_dataset};

use crate::config::{RunConfig, Solver};
use crate::error::{CliError, CliResult};
use crate::manifest::{OutputDir, RunManifest};
use crate::{DATASET_FILE, PROBES_FILE, TRUTH_FILE};

/// Writes the probe table, the true POVM and the simulated dataset.
///
/// `probes.csv` has one row `(μ, φ)` per probe. The phase column is zero for
/// the phase-insensitive solvers.
pub fn simulate(cfg: &RunConfig, out_dir: &Path) -> CliResult<PathBuf> {
    cfg.validate()?;
    let truth = efficient_pnr_povm(cfg.hilbert_dim, cfg.outcomes, cfg.eta)?;
    let mut manifest = RunManifest::new("simulate", Some(cfg));

    let (table, probs) =
        match cfg.solver {
            Solver::Gd | Solver::Baseline => {
                let probes = build_probe_grid(cfg.probes, cfg.hilbert_dim, cfg.tail_bound)?;
                let data = simulate_dataset(&truth, &probes, cfg.sigma, cfg.seed, cfg.shots)?;
                let mu = probes.mean_photon_numbers();
                manifest.probe_fingerprint = Some(probes.fingerprint());
                (DMatrix::from_fn(mu.len(), 2, |i, j| if j == 0 { mu[i] } else { 0.0 }), data.probs)
            }
            Solver::Stiefel => {
                if cfg.sigma != 0.0 || cfg.shots.is_some() {
                    return Err(CliError::Config(
                        "amplitude noise and finite shots are only simulated for the diagonal solvers".into(),
                    ));
                }
                let probes = phase_probe_grid(cfg.probes, cfg.phases, cfg.hilbert_dim, cfg.tail_bound)?;
                let data = PhaseSensitiveDataset::from_diagonal_povm(&truth, probes.clone())?;
                let table = DMatrix::from_fn(probes.len(), 2, |i, j| {
                    if j == 0 {
                        probes[i].mean_photon_number
                    } else {
                        probes[i].phase
                    }
                });
                (table, data.probs().clone())
            }
        };

    let mut out = OutputDir::create(out_dir)?;
    out.matrix(PROBES_FILE, &table)?;
    out.matrix(TRUTH_FILE, truth.pi())?;
    out.matrix(DATASET_FILE, &probs)?;
    out.finish(manifest)
}
