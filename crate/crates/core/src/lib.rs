//! Quantum detector tomography of phase-insensitive photon-number-resolving
//! detectors.
//!
//! The POVM of a phase-insensitive detector is diagonal in the Fock basis and
//! is described by a row-stochastic `M × N` matrix `Π`. Given the outcome
//! statistics `P` of `D` coherent probes with Fock-state distribution `F`,
//! the reconstruction minimizes `‖P - FΠ‖²_F` (optionally with a smoothing
//! penalty) over valid `Π`.
//!
//! - [`fock`]: Poisson numerics, probe grids and coherent-state amplitudes.
//! - [`detector`]: ideal and lossy detector models and data simulation.
//! - [`gd`]: softmax-parametrized minibatch Adam, the main solver.
//! - [`baseline`]: projected-gradient reference solver.
//! - [`metrics`]: POVM fidelity.
//! - [`stiefel`]: phase-sensitive reconstruction on the Stiefel manifold.

pub mod baseline;
pub mod detector;
mod error;
pub mod fock;
pub mod gd;
pub mod metrics;
pub mod stiefel;

pub use baseline::{fit_baseline, project_to_simplex, BaselineConfig};
pub use detector::{efficient_pnr_povm, ideal_pnr_povm, simulate_dataset, Dataset, DiagonalPovm};
pub use error::{QdtError, Result};
pub use fock::{build_probe_grid, coherent_amplitude_vector, max_mean_photon, poisson_cdf, poisson_pmf, ProbeSet};
pub use gd::{fit, multi_start_fit, softmax_rows, FitConfig, FitResult, Logits};
pub use metrics::{average_fidelity, diagonal_fidelity, matrix_fidelity_oracle, FidelityReport};
pub use stiefel::{fit_phase_sensitive, random_stiefel, riemannian_step, StiefelPoint};
