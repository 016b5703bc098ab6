//! Phase-sensitive tomography on the complex Stiefel manifold.
//!
//! Each POVM element is factored as `E_j = W_j† W_j` with `W_j` an `r_j × M`
//! complex matrix, which makes every element Hermitian and positive
//! semidefinite with rank at most `r_j`. Stacking the factors vertically gives
//! a `K × M` matrix `𝒲` (`K = Σ r_j`) and completeness `Σ E_j = I` becomes
//! `𝒲†𝒲 = I`: the columns of `𝒲` are orthonormal.
//!
//! Descent stays on the manifold through a Cayley-type update. With the
//! normalized Euclidean gradient `G`, `A = [G, 𝒲]` and `B = [𝒲, -G]`,
//!
//! ```text
//! ∇* = A (I + γ/2 B†A)⁻¹ B† 𝒲,      𝒲' = 𝒲 - γ ∇*
//! ```
//!
//! which equals `(I + γ/2 S)⁻¹ (I - γ/2 S) 𝒲` for the skew-Hermitian
//! `S = G𝒲† - 𝒲G†`, so `𝒲'` has orthonormal columns again.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::detector::DiagonalPovm;
use crate::error::{config_err, domain_err, QdtError, Result};
use crate::fock::{coherent_amplitude_vector, max_mean_photon};

/// Largest `‖𝒲†𝒲 - I‖_F` accepted by [`StiefelPoint::new`].
pub const STIEFEL_TOLERANCE: f64 = 1e-8;

/// Times a step is retried with half the learning rate when the Cayley
/// system is singular.
pub const MAX_STEP_HALVINGS: usize = 10;

/// Stacked POVM factors with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint {
    w: DMatrix<Complex64>,
    block_ranks: Vec<usize>,
}

fn check_ranks(block_ranks: &[usize], hilbert_dim: usize) -> Result<usize> {
    if block_ranks.is_empty() || block_ranks.contains(&0) {
        return config_err("block ranks must be a nonempty list of positive integers");
    }
    let total: usize = block_ranks.iter().sum();
    if total < hilbert_dim {
        return config_err(format!(
            "block ranks sum to {total}, fewer than hilbert_dim {hilbert_dim}; completeness is impossible"
        ));
    }
    Ok(total)
}

impl StiefelPoint {
    pub fn new(w: DMatrix<Complex64>, block_ranks: Vec<usize>) -> Result<Self> {
        let total = check_ranks(&block_ranks, w.ncols())?;
        if total != w.nrows() {
            return config_err(format!("block ranks sum to {total} but the matrix has {} rows", w.nrows()));
        }
        let point = Self { w, block_ranks };
        let defect = point.orthonormality_defect();
        if defect.is_nan() || defect > STIEFEL_TOLERANCE {
            return domain_err(format!("columns are not orthonormal (defect {defect:e})"));
        }
        Ok(point)
    }

    pub fn w(&self) -> &DMatrix<Complex64> {
        &self.w
    }

    pub fn block_ranks(&self) -> &[usize] {
        &self.block_ranks
    }

    pub fn hilbert_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn num_outcomes(&self) -> usize {
        self.block_ranks.len()
    }

    fn offsets(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.block_ranks.iter().scan(0, |start, &r| {
            let s = *start;
            *start += r;
            Some((s, r))
        })
    }

    /// The factor `W_j`.
    pub fn block(&self, j: usize) -> DMatrix<Complex64> {
        let (start, r) = self.offsets().nth(j).expect("block index out of range");
        self.w.rows(start, r).into_owned()
    }

    /// `‖𝒲†𝒲 - I‖_F`.
    pub fn orthonormality_defect(&self) -> f64 {
        let m = self.w.ncols();
        (self.w.ad_mul(&self.w) - DMatrix::<Complex64>::identity(m, m)).norm()
    }

    /// The POVM elements `E_j = W_j† W_j`.
    pub fn povm_elements(&self) -> Vec<DMatrix<Complex64>> {
        self.offsets()
            .map(|(s, r)| {
                let block = self.w.rows(s, r);
                block.ad_mul(&block)
            })
            .collect()
    }
}

/// Random point: a complex Gaussian matrix with orthonormalized columns.
pub fn random_stiefel(block_ranks: &[usize], hilbert_dim: usize, seed: u64) -> Result<StiefelPoint> {
    if hilbert_dim == 0 {
        return config_err("hilbert_dim must be positive");
    }
    let k = check_ranks(block_ranks, hilbert_dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(k * hilbert_dim);
    for _ in 0..k * hilbert_dim {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        draws.push(Complex64::new(re, im));
    }
    let z = DMatrix::from_row_slice(k, hilbert_dim, &draws);
    let q = z.qr().q();
    StiefelPoint::new(q, block_ranks.to_vec())
}

/// A coherent probe `|√μ e^{iφ}⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentProbe {
    pub mean_photon_number: f64,
    pub phase: f64,
}

/// `num_means` evenly spaced mean photon numbers on `[0, μ_max]` crossed with
/// `num_phases` evenly spaced phases on `[0, 2π)`.
pub fn phase_probe_grid(
    num_means: usize,
    num_phases: usize,
    hilbert_dim: usize,
    tail_bound: f64,
) -> Result<Vec<CoherentProbe>> {
    if num_means < 2 || num_phases == 0 {
        return config_err("need at least 2 mean photon numbers and 1 phase");
    }
    let mu_max = max_mean_photon(hilbert_dim, tail_bound)?;
    let mut out = Vec::with_capacity(num_means * num_phases);
    for a in 0..num_means {
        let mu = mu_max * a as f64 / (num_means - 1) as f64;
        for b in 0..num_phases {
            let phase = std::f64::consts::TAU * b as f64 / num_phases as f64;
            out.push(CoherentProbe { mean_photon_number: mu, phase });
        }
    }
    Ok(out)
}

/// Outcome probabilities for a set of coherent probes of a phase-sensitive detector.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSensitiveDataset {
    probs: DMatrix<f64>,
    probes: Vec<CoherentProbe>,
    // Row i holds the transpose of probe i's amplitude vector.
    amplitudes: DMatrix<Complex64>,
}

fn amplitude_matrix(probes: &[CoherentProbe], hilbert_dim: usize) -> Result<DMatrix<Complex64>> {
    let mut a = DMatrix::zeros(probes.len(), hilbert_dim);
    for (i, p) in probes.iter().enumerate() {
        let v = coherent_amplitude_vector(p.mean_photon_number, p.phase, hilbert_dim)?;
        a.row_mut(i).copy_from(&v.transpose());
    }
    Ok(a)
}

impl PhaseSensitiveDataset {
    pub fn new(probs: DMatrix<f64>, probes: Vec<CoherentProbe>, hilbert_dim: usize) -> Result<Self> {
        if probes.is_empty() {
            return config_err("at least one probe is required");
        }
        if probs.nrows() != probes.len() {
            return config_err(format!("{} data rows for {} probes", probs.nrows(), probes.len()));
        }
        if let Some(bad) = probs.iter().find(|x| !(0.0..=1.0 + 1e-9).contains(*x)) {
            return domain_err(format!("dataset entry {bad} is not a probability"));
        }
        let amplitudes = amplitude_matrix(&probes, hilbert_dim)?;
        Ok(Self { probs, probes, amplitudes })
    }

    /// Exact statistics `P_ij = ⟨α_i|E_j|α_i⟩` of a known POVM.
    pub fn simulate(elements: &[DMatrix<Complex64>], probes: Vec<CoherentProbe>) -> Result<Self> {
        let m = match elements.first() {
            Some(e) if e.is_square() => e.nrows(),
            _ => return config_err("need at least one square POVM element"),
        };
        if elements.iter().any(|e| e.shape() != (m, m)) {
            return config_err("POVM elements must share one shape");
        }
        let amplitudes = amplitude_matrix(&probes, m)?;
        let mut probs = DMatrix::zeros(probes.len(), elements.len());
        for i in 0..probes.len() {
            let a: DVector<Complex64> = amplitudes.row(i).transpose();
            for (j, e) in elements.iter().enumerate() {
                probs[(i, j)] = a.dotc(&(e * &a)).re.clamp(0.0, 1.0);
            }
        }
        Self::new(probs, probes, m)
    }

    /// Exact statistics of a phase-insensitive detector.
    pub fn from_diagonal_povm(povm: &DiagonalPovm, probes: Vec<CoherentProbe>) -> Result<Self> {
        let elements: Vec<_> = (0..povm.num_outcomes())
            .map(|j| DMatrix::from_diagonal(&DVector::from_vec(povm.element(j))).map(|x| Complex64::new(x, 0.0)))
            .collect();
        Self::simulate(&elements, probes)
    }

    pub fn probs(&self) -> &DMatrix<f64> {
        &self.probs
    }

    pub fn probes(&self) -> &[CoherentProbe] {
        &self.probes
    }

    pub fn hilbert_dim(&self) -> usize {
        self.amplitudes.ncols()
    }

    /// Truncated amplitude vector of probe `i`.
    pub fn amplitude(&self, i: usize) -> DVector<Complex64> {
        self.amplitudes.row(i).transpose()
    }
}

fn check_compat(point: &StiefelPoint, dataset: &PhaseSensitiveDataset) -> Result<()> {
    if point.hilbert_dim() != dataset.hilbert_dim() {
        return config_err(format!(
            "point acts on dimension {} but probes on {}",
            point.hilbert_dim(),
            dataset.hilbert_dim()
        ));
    }
    if point.num_outcomes() != dataset.probs.ncols() {
        return config_err(format!(
            "point has {} blocks but data has {} outcomes",
            point.num_outcomes(),
            dataset.probs.ncols()
        ));
    }
    Ok(())
}

// Column i of the result is W_j a_i.
fn block_images(point: &StiefelPoint, amplitudes: &DMatrix<Complex64>) -> Vec<DMatrix<Complex64>> {
    let at = amplitudes.transpose();
    point.offsets().map(|(s, r)| point.w.rows(s, r) * &at).collect()
}

fn probs_from_images(images: &[DMatrix<Complex64>], num_probes: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(num_probes, images.len());
    for (j, y) in images.iter().enumerate() {
        for i in 0..num_probes {
            out[(i, j)] = y.column(i).norm_squared();
        }
    }
    out
}

/// `p_ij = ‖W_j a_i‖²` for probe amplitude vectors `a_i`.
pub fn predicted_probs(point: &StiefelPoint, amplitudes: &[DVector<Complex64>]) -> Result<DMatrix<f64>> {
    let m = point.hilbert_dim();
    if let Some(bad) = amplitudes.iter().find(|a| a.len() != m) {
        return config_err(format!("amplitude vector of length {} for dimension {m}", bad.len()));
    }
    let mut a = DMatrix::zeros(amplitudes.len(), m);
    for (i, v) in amplitudes.iter().enumerate() {
        a.row_mut(i).copy_from(&v.transpose());
    }
    Ok(probs_from_images(&block_images(point, &a), amplitudes.len()))
}

/// Least-squares loss `Σ_ij (p_ij - P_ij)²`.
pub fn loss(point: &StiefelPoint, dataset: &PhaseSensitiveDataset) -> Result<f64> {
    check_compat(point, dataset)?;
    let p = probs_from_images(&block_images(point, &dataset.amplitudes), dataset.probes.len());
    Ok((p - &dataset.probs).norm_squared())
}

/// Gradient of [`loss`] with respect to the conjugate of `𝒲`.
///
/// Block `j` is `2 Σ_i (p_ij - P_ij) (W_j a_i) a_i†`. In terms of real
/// coordinates this is `½ (∂L/∂Re 𝒲 + i ∂L/∂Im 𝒲)`, so `-grad` is a descent
/// direction.
pub fn euclidean_gradient(point: &StiefelPoint, dataset: &PhaseSensitiveDataset) -> Result<DMatrix<Complex64>> {
    check_compat(point, dataset)?;
    let images = block_images(point, &dataset.amplitudes);
    let d = dataset.probes.len();
    let predicted = probs_from_images(&images, d);
    let conj_amps = dataset.amplitudes.map(|z| z.conj());
    let mut grad = DMatrix::zeros(point.w.nrows(), point.w.ncols());
    for ((j, (s, r)), y) in point.offsets().enumerate().zip(&images) {
        let mut weighted = y.clone();
        for i in 0..d {
            let c = 2.0 * (predicted[(i, j)] - dataset.probs[(i, j)]);
            weighted.column_mut(i).scale_mut(c);
        }
        grad.rows_mut(s, r).copy_from(&(weighted * &conj_amps));
    }
    Ok(grad)
}

/// One Cayley-type descent step of length `gamma` along the normalized gradient.
///
/// A singular linear system halves `gamma`, up to [`MAX_STEP_HALVINGS`] times.
pub fn riemannian_step(point: &StiefelPoint, grad: &DMatrix<Complex64>, gamma: f64) -> Result<StiefelPoint> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return config_err(format!("step size must be positive, got {gamma}"));
    }
    if grad.shape() != point.w.shape() {
        return config_err(format!("gradient shape {:?} differs from point {:?}", grad.shape(), point.w.shape()));
    }
    let norm = grad.norm();
    if !norm.is_finite() {
        return Err(QdtError::Numeric("gradient is not finite".into()));
    }
    if norm == 0.0 {
        return Ok(point.clone());
    }
    let w = &point.w;
    let g = grad.unscale(norm);
    let (k, m) = w.shape();

    let mut a = DMatrix::zeros(k, 2 * m);
    a.columns_mut(0, m).copy_from(&g);
    a.columns_mut(m, m).copy_from(w);
    let mut b = DMatrix::zeros(k, 2 * m);
    b.columns_mut(0, m).copy_from(w);
    b.columns_mut(m, m).copy_from(&(-&g));
    let bh_a = b.ad_mul(&a);
    let bh_w = b.ad_mul(w);
    let identity = DMatrix::<Complex64>::identity(2 * m, 2 * m);

    let mut step = gamma;
    for _ in 0..=MAX_STEP_HALVINGS {
        let lhs = &identity + bh_a.scale(step / 2.0);
        if let Some(x) = lhs.lu().solve(&bh_w) {
            let direction = &a * x;
            let next = w - direction.scale(step);
            if next.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Ok(StiefelPoint { w: next, block_ranks: point.block_ranks.clone() });
            }
        }
        step /= 2.0;
    }
    Err(QdtError::Numeric(format!("Cayley system singular after {MAX_STEP_HALVINGS} step halvings from {gamma}")))
}

/// Number of eigenvalues of the Hermitian matrix `e` above `threshold`.
pub fn numerical_rank(e: &DMatrix<Complex64>, threshold: f64) -> usize {
    SymmetricEigen::new(e.clone()).eigenvalues.iter().filter(|l| **l > threshold).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseSensitiveConfig {
    /// Rows of each factor `W_j`; one entry per outcome.
    pub block_ranks: Vec<usize>,
    pub iterations: usize,
    pub gamma: f64,
    /// Per-iteration multiplicative decay of `gamma`.
    pub gamma_decay: f64,
    pub seed: u64,
}

impl Default for PhaseSensitiveConfig {
    fn default() -> Self {
        Self { block_ranks: Vec::new(), iterations: 500, gamma: 0.05, gamma_decay: 0.995, seed: 0 }
    }
}

impl PhaseSensitiveConfig {
    /// Rank-one factors for the photon-count outcomes and a full-rank
    /// remainder for the overflow bucket.
    pub fn pnr_ranks(hilbert_dim: usize, num_outcomes: usize) -> Result<Vec<usize>> {
        if num_outcomes < 2 || num_outcomes > hilbert_dim {
            return config_err(format!("cannot build ranks for {num_outcomes} outcomes in dimension {hilbert_dim}"));
        }
        let mut ranks = vec![1; num_outcomes - 1];
        ranks.push(hilbert_dim - (num_outcomes - 1));
        Ok(ranks)
    }
}

#[derive(Debug, Clone)]
pub struct PhaseSensitiveFit {
    pub point: StiefelPoint,
    /// Loss at the initialization followed by the loss after every iteration.
    pub loss_history: Vec<f64>,
    pub elements: Vec<DMatrix<Complex64>>,
}

/// Full-batch Riemannian descent from a random point.
pub fn fit_phase_sensitive(
    dataset: &PhaseSensitiveDataset,
    config: &PhaseSensitiveConfig,
) -> Result<PhaseSensitiveFit> {
    if !(config.gamma.is_finite() && config.gamma > 0.0 && config.gamma_decay > 0.0 && config.gamma_decay <= 1.0) {
        return config_err("gamma must be positive and gamma_decay in (0, 1]");
    }
    let mut point = random_stiefel(&config.block_ranks, dataset.hilbert_dim(), config.seed)?;
    check_compat(&point, dataset)?;
    let mut loss_history = Vec::with_capacity(config.iterations + 1);
    loss_history.push(loss(&point, dataset)?);
    let mut gamma = config.gamma;
    for iteration in 0..config.iterations {
        let grad = euclidean_gradient(&point, dataset)?;
        point = riemannian_step(&point, &grad, gamma)?;
        let value = loss(&point, dataset)?;
        if !value.is_finite() {
            return Err(QdtError::Numeric(format!("loss became {value} at iteration {iteration}")));
        }
        loss_history.push(value);
        gamma *= config.gamma_decay;
    }
    let elements = point.povm_elements();
    Ok(PhaseSensitiveFit { point, loss_history, elements })
}
