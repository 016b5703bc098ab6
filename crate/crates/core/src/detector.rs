//! Ground-truth photon-number-resolving detectors and simulated probe data.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};

use crate::error::{config_err, domain_err, Result};
use crate::fock::{ln_factorial, ProbeSet};

/// Row-sum tolerance accepted by [`DiagonalPovm::new`].
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// A POVM whose elements are all diagonal in the Fock basis.
///
/// Stored as the `M × N` matrix `Π` with `Π[(i, j)] = ⟨i|E_j|i⟩`; every row is
/// a probability vector over the `N` outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalPovm {
    pi: DMatrix<f64>,
}

impl DiagonalPovm {
    /// Validates nonnegativity and row-stochasticity of `pi`.
    pub fn new(pi: DMatrix<f64>) -> Result<Self> {
        if pi.nrows() == 0 || pi.ncols() == 0 {
            return config_err("POVM matrix must be nonempty");
        }
        for (i, row) in pi.row_iter().enumerate() {
            if let Some(bad) = row.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return domain_err(format!("POVM row {i} has invalid entry {bad}"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return domain_err(format!("POVM row {i} sums to {sum}, not 1"));
            }
        }
        Ok(Self { pi })
    }

    /// Wraps a matrix that is row-stochastic by construction.
    pub(crate) fn from_stochastic(pi: DMatrix<f64>) -> Self {
        debug_assert!(pi.row_iter().all(|r| (r.sum() - 1.0).abs() <= ROW_SUM_TOLERANCE));
        Self { pi }
    }

    pub fn pi(&self) -> &DMatrix<f64> {
        &self.pi
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.pi
    }

    pub fn hilbert_dim(&self) -> usize {
        self.pi.nrows()
    }

    pub fn num_outcomes(&self) -> usize {
        self.pi.ncols()
    }

    /// Diagonal of element `j`.
    pub fn element(&self, j: usize) -> Vec<f64> {
        self.pi.column(j).iter().copied().collect()
    }
}

fn check_outcomes(hilbert_dim: usize, num_outcomes: usize) -> Result<()> {
    if num_outcomes < 2 {
        return config_err(format!("a detector needs at least 2 outcomes, got {num_outcomes}"));
    }
    if num_outcomes > hilbert_dim {
        return config_err(format!(
            "{num_outcomes} outcomes exceed hilbert_dim {hilbert_dim}; the overflow bucket would be empty"
        ));
    }
    Ok(())
}

/// Ideal detector resolving `0..=N-2` photons, with a final "≥ N-1" bucket.
pub fn ideal_pnr_povm(hilbert_dim: usize, num_outcomes: usize) -> Result<DiagonalPovm> {
    check_outcomes(hilbert_dim, num_outcomes)?;
    let last = num_outcomes - 1;
    let pi = DMatrix::from_fn(hilbert_dim, num_outcomes, |i, j| {
        let hit = if j < last { i == j } else { i >= last };
        if hit {
            1.0
        } else {
            0.0
        }
    });
    Ok(DiagonalPovm::from_stochastic(pi))
}

/// Binomial loss model: a detector with quantum efficiency `eta` registers
/// `n` of `k` incident photons with probability `C(k,n) ηⁿ (1-η)^{k-n}`.
///
/// The final column is the completeness remainder, clamped at zero.
pub fn efficient_pnr_povm(hilbert_dim: usize, num_outcomes: usize, eta: f64) -> Result<DiagonalPovm> {
    check_outcomes(hilbert_dim, num_outcomes)?;
    if !(0.0..=1.0).contains(&eta) {
        return domain_err(format!("efficiency must lie in [0, 1], got {eta}"));
    }
    let last = num_outcomes - 1;
    let mut pi = DMatrix::zeros(hilbert_dim, num_outcomes);
    for k in 0..hilbert_dim {
        let mut resolved = 0.0;
        for n in 0..last.min(k + 1) {
            let p = binomial_pmf(k as u64, n as u64, eta);
            pi[(k, n)] = p;
            resolved += p;
        }
        pi[(k, last)] = (1.0 - resolved).max(0.0);
    }
    Ok(DiagonalPovm::from_stochastic(pi))
}

fn binomial_pmf(k: u64, n: u64, eta: f64) -> f64 {
    if eta == 1.0 {
        return if n == k { 1.0 } else { 0.0 };
    }
    if eta == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let ln_choose = ln_factorial(k) - ln_factorial(n) - ln_factorial(k - n);
    (ln_choose + n as f64 * eta.ln() + (k - n) as f64 * (-eta).ln_1p()).exp()
}

/// Outcome probabilities measured for each probe.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `D × N` matrix `P`.
    pub probs: DMatrix<f64>,
    /// Fingerprint of the [`ProbeSet`] the data was generated with.
    pub probe_set_ref: String,
    /// Standard deviation of the amplitude noise added to each `|α|²`.
    pub noise_sigma: f64,
    /// Number of detection events per probe, when finite statistics were sampled.
    pub shots: Option<u64>,
}

impl Dataset {
    /// Wraps externally measured probabilities.
    pub fn from_probs(probs: DMatrix<f64>, probes: &ProbeSet) -> Result<Self> {
        if probs.nrows() != probes.num_probes() {
            return config_err(format!(
                "dataset has {} rows but there are {} probes",
                probs.nrows(),
                probes.num_probes()
            ));
        }
        if let Some(bad) = probs.iter().find(|x| !(0.0..=1.0 + 1e-9).contains(*x)) {
            return domain_err(format!("dataset entry {bad} is not a probability"));
        }
        Ok(Self { probs, probe_set_ref: probes.fingerprint(), noise_sigma: 0.0, shots: None })
    }

    pub fn num_probes(&self) -> usize {
        self.probs.nrows()
    }

    pub fn num_outcomes(&self) -> usize {
        self.probs.ncols()
    }
}

/// Simulates the measured statistics `P = F̃ Π` for `povm` under `probes`.
///
/// Each probe's mean photon number is perturbed by `N(0, σ²)` noise (clamped
/// at zero) before forming `F̃`; reconstruction later uses the unperturbed
/// `F`. With `shots = Some(S)` each row is replaced by multinomial
/// frequencies from `S` draws.
pub fn simulate_dataset(
    povm: &DiagonalPovm,
    probes: &ProbeSet,
    sigma: f64,
    seed: u64,
    shots: Option<u64>,
) -> Result<Dataset> {
    if povm.hilbert_dim() != probes.hilbert_dim() {
        return config_err(format!(
            "POVM hilbert_dim {} does not match probe hilbert_dim {}",
            povm.hilbert_dim(),
            probes.hilbert_dim()
        ));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return domain_err(format!("noise sigma must be finite and nonnegative, got {sigma}"));
    }
    if shots == Some(0) {
        return config_err("shots must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let forward = if sigma == 0.0 {
        probes.probe_matrix() * povm.pi()
    } else {
        let normal = Normal::new(0.0, sigma).map_err(|e| crate::QdtError::Domain(e.to_string()))?;
        let perturbed: Vec<f64> =
            probes.mean_photon_numbers().iter().map(|mu| (mu + normal.sample(&mut rng)).max(0.0)).collect();
        let noisy = ProbeSet::from_mean_photon_numbers(perturbed, probes.hilbert_dim())?;
        noisy.probe_matrix() * povm.pi()
    };

    let probs = match shots {
        None => forward,
        Some(total) => sample_frequencies(&forward, total, &mut rng)?,
    };

    Ok(Dataset { probs, probe_set_ref: probes.fingerprint(), noise_sigma: sigma, shots })
}

fn sample_frequencies(probs: &DMatrix<f64>, shots: u64, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(probs.nrows(), probs.ncols());
    for i in 0..probs.nrows() {
        let row = probs.row(i);
        // Truncation leaves the row slightly short of 1; sample from the
        // renormalized distribution.
        let mut remaining_mass: f64 = row.iter().sum();
        let mut remaining = shots;
        for j in 0..probs.ncols() {
            if remaining == 0 {
                break;
            }
            let count = if j + 1 == probs.ncols() || remaining_mass <= 0.0 {
                remaining
            } else {
                let p = (row[j] / remaining_mass).clamp(0.0, 1.0);
                Binomial::new(remaining, p).map_err(|e| crate::QdtError::Numeric(e.to_string()))?.sample(rng)
            };
            out[(i, j)] = count as f64 / shots as f64;
            remaining -= count;
            remaining_mass -= row[j];
        }
    }
    Ok(out)
}
