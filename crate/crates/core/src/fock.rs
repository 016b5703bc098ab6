//! Fock-basis numerics for coherent-state probes.
//!
//! A coherent state with mean photon number `μ = |α|²` has Poissonian
//! photon statistics, so the probability of finding `j` photons is
//!
//! ```text
//! F(μ, j) = μ^j e^{-μ} / j!
//! ```
//!
//! Both `μ^j` and `j!` overflow `f64` long before the probe energies used in
//! practice (`M = 200`, `μ ≈ 145`), so the pmf is evaluated entirely in log
//! space using the saddle-point form
//!
//! ```text
//! ln F(μ, j) = -½ ln(2πj) - δ(j) - bd0(j, μ)
//! ```
//!
//! where `δ(j) = ln j! - ln(√(2πj) (j/e)^j)` is the Stirling remainder and
//! `bd0(j, μ) = j ln(j/μ) + μ - j` is evaluated by a series when `j ≈ μ`.
//! This is an exact rewrite of `j ln μ - μ - lnΓ(j+1)` that avoids the
//! catastrophic cancellation between its three large terms.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{config_err, domain_err, QdtError, Result};

/// Default bound on the probability mass a probe may place outside the
/// truncated Hilbert space.
pub const DEFAULT_TAIL_BOUND: f64 = 1e-5;

/// Absolute tolerance of the bisection in [`max_mean_photon`].
pub const MAX_MEAN_PHOTON_TOLERANCE: f64 = 1e-9;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

// δ(n) for n = 0..=15; δ(0) is unused.
const STIRLING_REMAINDER: [f64; 16] = [
    0.0,
    0.081_061_466_795_327_26,
    0.041_340_695_955_409_29,
    0.027_677_925_684_998_34,
    0.020_790_672_103_765_09,
    0.016_644_691_189_821_19,
    0.013_876_128_823_070_75,
    0.011_896_709_945_891_77,
    0.010_411_265_261_972_1,
    0.009_255_462_182_712_733,
    0.008_330_563_433_362_87,
    0.007_573_675_487_951_841,
    0.006_942_840_107_209_53,
    0.006_408_994_188_004_207,
    0.005_951_370_112_758_848,
    0.005_554_733_551_962_801,
];

/// Stirling remainder `ln n! - (n + ½) ln n + n - ½ ln 2π` for `n ≥ 1`.
fn stirling_remainder(n: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15 {
        return STIRLING_REMAINDER[n as usize];
    }
    let n = n as f64;
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x/m) + m - x`, accurate when `x ≈ m`.
fn deviance(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let mut v = (x - m) / (x + m);
        let mut sum = (x - m) * v;
        let mut term = 2.0 * x * v;
        v *= v;
        for k in 1..1000 {
            term *= v;
            let next = sum + term / (2 * k + 1) as f64;
            if next == sum {
                return next;
            }
            sum = next;
        }
        sum
    } else {
        x * (x / m).ln() + m - x
    }
}

/// `ln n!`, via the Stirling remainder.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let x = n as f64;
    stirling_remainder(n) + (x + 0.5) * x.ln() - x + LN_SQRT_2PI
}

fn check_mean(mu: f64) -> Result<()> {
    if !(mu.is_finite() && mu >= 0.0) {
        return domain_err(format!("mean photon number must be finite and nonnegative, got {mu}"));
    }
    Ok(())
}

/// Natural log of the Poisson pmf; `-inf` when the probability is exactly 0.
pub fn ln_poisson_pmf(mu: f64, j: u64) -> Result<f64> {
    check_mean(mu)?;
    if mu == 0.0 {
        return Ok(if j == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if j == 0 {
        return Ok(-mu);
    }
    let x = j as f64;
    Ok(-LN_SQRT_2PI - 0.5 * x.ln() - stirling_remainder(j) - deviance(x, mu))
}

/// Probability that a coherent state of mean photon number `mu` contains
/// exactly `j` photons.
pub fn poisson_pmf(mu: f64, j: u64) -> Result<f64> {
    ln_poisson_pmf(mu, j).map(f64::exp)
}

/// Cumulative Poisson probability `Φ(j; μ) = Σ_{k≤j} pmf(μ, k)`.
pub fn poisson_cdf(mu: f64, j: u64) -> Result<f64> {
    check_mean(mu)?;
    let mut sum = 0.0;
    for k in 0..=j {
        sum += poisson_pmf(mu, k)?;
    }
    Ok(sum.min(1.0))
}

fn survival(mu: f64, hilbert_dim: usize) -> Result<f64> {
    Ok(1.0 - poisson_cdf(mu, hilbert_dim as u64 - 1)?)
}

/// Largest mean photon number below `hilbert_dim` whose Poisson mass beyond
/// the truncation, `1 - Φ(M-1; μ)`, does not exceed `tail_bound`.
///
/// Found by bisection on `[0, M)`; the returned value always satisfies the
/// bound when re-evaluated.
pub fn max_mean_photon(hilbert_dim: usize, tail_bound: f64) -> Result<f64> {
    if hilbert_dim < 2 {
        return config_err(format!("hilbert_dim must be at least 2, got {hilbert_dim}"));
    }
    if !(tail_bound > 0.0 && tail_bound < 1.0) {
        return domain_err(format!("tail_bound must lie in (0, 1), got {tail_bound}"));
    }
    let mut lo = 0.0;
    let mut hi = hilbert_dim as f64;
    if survival(lo, hilbert_dim)? > tail_bound {
        return Err(QdtError::Internal("vacuum probe violates the tail bound".into()));
    }
    if survival(hi, hilbert_dim)? <= tail_bound {
        // The whole interval qualifies; stay strictly below M.
        return Ok(hi - MAX_MEAN_PHOTON_TOLERANCE);
    }
    while hi - lo > MAX_MEAN_PHOTON_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if survival(mid, hilbert_dim)? <= tail_bound {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// A set of phase-insensitive coherent probes and their `D × M` matrix of
/// Fock-state probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    mean_photon_numbers: Vec<f64>,
    hilbert_dim: usize,
    probe_matrix: DMatrix<f64>,
}

impl ProbeSet {
    /// Builds the probe matrix for arbitrary mean photon numbers.
    pub fn from_mean_photon_numbers(mean_photon_numbers: Vec<f64>, hilbert_dim: usize) -> Result<Self> {
        if hilbert_dim < 1 {
            return config_err("hilbert_dim must be positive");
        }
        if mean_photon_numbers.is_empty() {
            return config_err("a probe set needs at least one probe");
        }
        let mut probe_matrix = DMatrix::zeros(mean_photon_numbers.len(), hilbert_dim);
        for (i, &mu) in mean_photon_numbers.iter().enumerate() {
            for j in 0..hilbert_dim {
                probe_matrix[(i, j)] = poisson_pmf(mu, j as u64)?;
            }
        }
        Ok(Self { mean_photon_numbers, hilbert_dim, probe_matrix })
    }

    pub fn mean_photon_numbers(&self) -> &[f64] {
        &self.mean_photon_numbers
    }

    pub fn hilbert_dim(&self) -> usize {
        self.hilbert_dim
    }

    pub fn num_probes(&self) -> usize {
        self.mean_photon_numbers.len()
    }

    /// The matrix `F` with `F[(i, j)]` the probability of `j` photons in probe `i`.
    pub fn probe_matrix(&self) -> &DMatrix<f64> {
        &self.probe_matrix
    }

    /// Stable 64-bit FNV-1a fingerprint of the grid, used to tie datasets to
    /// the probes that generated them.
    pub fn fingerprint(&self) -> String {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                hash ^= u64::from(b);
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(&(self.hilbert_dim as u64).to_le_bytes());
        for mu in &self.mean_photon_numbers {
            feed(&mu.to_bits().to_le_bytes());
        }
        format!("{hash:016x}")
    }
}

/// `num_probes` evenly spaced mean photon numbers on `[0, μ_max]`, endpoints
/// included, where `μ_max = max_mean_photon(hilbert_dim, tail_bound)`.
pub fn build_probe_grid(num_probes: usize, hilbert_dim: usize, tail_bound: f64) -> Result<ProbeSet> {
    if num_probes < 2 {
        return config_err(format!("probe grid needs at least 2 probes, got {num_probes}"));
    }
    let mu_max = max_mean_photon(hilbert_dim, tail_bound)?;
    let step = mu_max / (num_probes - 1) as f64;
    let mut mus: Vec<f64> = (0..num_probes).map(|k| k as f64 * step).collect();
    // Pin the top endpoint so that it is exactly the bisection result.
    mus[num_probes - 1] = mu_max;
    ProbeSet::from_mean_photon_numbers(mus, hilbert_dim)
}

/// Truncated Fock-basis amplitudes of the coherent state `|√μ e^{iφ}⟩`.
///
/// Entry `k` is `e^{-μ/2} (√μ e^{iφ})^k / √k!`. The vector is not
/// renormalized, so its squared norm is `Φ(M-1; μ)`.
pub fn coherent_amplitude_vector(mu: f64, phase: f64, hilbert_dim: usize) -> Result<DVector<Complex64>> {
    check_mean(mu)?;
    if !phase.is_finite() {
        return domain_err(format!("phase must be finite, got {phase}"));
    }
    let mut out = DVector::zeros(hilbert_dim);
    for k in 0..hilbert_dim {
        let modulus = (0.5 * ln_poisson_pmf(mu, k as u64)?).exp();
        out[k] = Complex64::from_polar(modulus, k as f64 * phase);
    }
    Ok(out)
}
