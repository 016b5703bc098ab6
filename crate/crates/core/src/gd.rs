//! Softmax-parametrized stochastic gradient descent for diagonal POVMs.
//!
//! The constrained problem
//!
//! ```text
//! min_Π ‖P - FΠ‖²_F + λ Σ_j Σ_i (Π_{i,j} - Π_{i+1,j})²,   Π ≥ 0,  Π 1 = 1
//! ```
//!
//! is made unconstrained by writing each row of `Π` as the softmax of a row of
//! free logits `Θ`. Any finite `Θ` then maps to a valid POVM, and the
//! objective is minimized with minibatched Adam.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::BaselineConfig;
use crate::detector::{Dataset, DiagonalPovm};
use crate::error::{config_err, QdtError, Result};
use crate::fock::ProbeSet;
use crate::metrics::{average_fidelity, mean_and_stddev, FidelityReport};

/// Unconstrained pre-softmax parameters, one row per Fock state.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits(pub DMatrix<f64>);

impl Logits {
    pub fn new(theta: DMatrix<f64>) -> Result<Self> {
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(QdtError::Numeric("logits must be finite".into()));
        }
        Ok(Self(theta))
    }

    pub fn to_povm(&self) -> DiagonalPovm {
        DiagonalPovm::from_stochastic(softmax_unchecked(&self.0))
    }
}

/// When the learning rate decays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayInterval {
    /// Once per pass over the probes.
    #[default]
    Epoch,
    /// After every minibatch update.
    Step,
}

/// Hyperparameters of [`fit`]. Defaults follow the values the method was
/// published with. `epsilon` is the conventional Adam value; logits start
/// near zero (`init_stddev = 0.1`) so every row begins close to uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub decay_interval: DecayInterval,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub seed: u64,
    pub init_stddev: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            lr_decay: 0.999,
            decay_interval: DecayInterval::Epoch,
            beta1: 0.9,
            beta2: 0.9,
            epsilon: 1e-8,
            epochs: 100,
            batch_size: 25,
            lambda: 0.0,
            seed: 0,
            init_stddev: 0.1,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                config_err(format!("{name} must be positive, got {v}"))
            }
        };
        positive("learning_rate", self.learning_rate)?;
        positive("epsilon", self.epsilon)?;
        positive("init_stddev", self.init_stddev)?;
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return config_err(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return config_err(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if self.batch_size == 0 {
            return config_err("batch_size must be positive");
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return config_err(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        Ok(())
    }
}

/// Hyperparameters of whichever solver produced a [`FitResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "lowercase")]
pub enum SolverConfig {
    Gd(FitConfig),
    Baseline(BaselineConfig),
}

/// Outcome of a reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub pi_hat: DiagonalPovm,
    /// Full-data objective after each epoch (or iteration, for the baseline).
    pub loss_history: Vec<f64>,
    /// Time spent in parameter updates, excluding loss bookkeeping.
    pub wall_clock_seconds: f64,
    pub wall_clock_per_iteration: Vec<f64>,
    pub seed: Option<u64>,
    pub config_echo: SolverConfig,
}

/// Row-wise softmax with the row maximum subtracted before exponentiating.
pub fn softmax_rows(theta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if theta.iter().any(|x| x.is_nan()) {
        return Err(QdtError::Numeric("softmax input contains NaN".into()));
    }
    if theta.iter().any(|x| x.is_infinite()) {
        return Err(QdtError::Numeric("softmax input contains an infinite value".into()));
    }
    Ok(softmax_unchecked(theta))
}

fn softmax_unchecked(theta: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = theta.clone();
    for mut row in out.row_iter_mut() {
        let max = row.max();
        row.apply(|x| *x = (*x - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Borrowed view of the fitting problem `(P, F, λ)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Problem<'a> {
    pub probs: &'a DMatrix<f64>,
    pub probe_matrix: &'a DMatrix<f64>,
    pub lambda: f64,
}

impl<'a> Problem<'a> {
    pub fn new(probs: &'a DMatrix<f64>, probe_matrix: &'a DMatrix<f64>, lambda: f64) -> Result<Self> {
        if probs.nrows() != probe_matrix.nrows() {
            return config_err(format!(
                "data has {} rows but the probe matrix has {}",
                probs.nrows(),
                probe_matrix.nrows()
            ));
        }
        if probs.nrows() == 0 {
            return config_err("empty dataset");
        }
        Ok(Self { probs, probe_matrix, lambda })
    }

    fn check_pi(&self, pi: &DMatrix<f64>) -> Result<()> {
        if pi.nrows() != self.probe_matrix.ncols() || pi.ncols() != self.probs.ncols() {
            return config_err(format!(
                "parameter shape {:?} incompatible with probe matrix {:?} and data {:?}",
                pi.shape(),
                self.probe_matrix.shape(),
                self.probs.shape()
            ));
        }
        Ok(())
    }

    fn check_batch(&self, batch: &[usize]) -> Result<()> {
        if batch.is_empty() {
            return config_err("minibatch must be nonempty");
        }
        if let Some(bad) = batch.iter().find(|&&i| i >= self.probs.nrows()) {
            return config_err(format!("minibatch index {bad} out of range"));
        }
        Ok(())
    }

    /// Residual `P_B - F_B Π` over the rows in `batch`.
    fn residual(&self, pi: &DMatrix<f64>, batch: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        let f_b = self.probe_matrix.select_rows(batch);
        let p_b = self.probs.select_rows(batch);
        let r = p_b - &f_b * pi;
        (f_b, r)
    }

    fn scale(&self, batch: &[usize]) -> f64 {
        self.probs.nrows() as f64 / batch.len() as f64
    }

    /// Objective as a function of `Π` directly.
    pub fn value(&self, pi: &DMatrix<f64>, batch: &[usize]) -> f64 {
        let (_, r) = self.residual(pi, batch);
        self.scale(batch) * r.norm_squared() + self.lambda * smoothing_penalty(pi)
    }

    /// Objective over every row; no row selection.
    pub fn full_value(&self, pi: &DMatrix<f64>) -> f64 {
        let r = self.probs - self.probe_matrix * pi;
        r.norm_squared() + self.lambda * smoothing_penalty(pi)
    }

    /// Gradient of [`Problem::full_value`] with respect to `Π`.
    pub fn full_gradient_pi(&self, pi: &DMatrix<f64>) -> DMatrix<f64> {
        let r = self.probs - self.probe_matrix * pi;
        let mut g = self.probe_matrix.tr_mul(&r) * -2.0;
        if self.lambda != 0.0 {
            add_smoothing_gradient(&mut g, pi, self.lambda);
        }
        g
    }

    /// Gradient of [`Problem::value`] with respect to `Π`.
    pub fn gradient_pi(&self, pi: &DMatrix<f64>, batch: &[usize]) -> DMatrix<f64> {
        let (f_b, r) = self.residual(pi, batch);
        let mut g = f_b.tr_mul(&r) * (-2.0 * self.scale(batch));
        if self.lambda != 0.0 {
            add_smoothing_gradient(&mut g, pi, self.lambda);
        }
        g
    }
}

/// `Σ_j Σ_i (Π_{i,j} - Π_{i+1,j})²`.
pub fn smoothing_penalty(pi: &DMatrix<f64>) -> f64 {
    let m = pi.nrows();
    if m < 2 {
        return 0.0;
    }
    let diff = pi.rows(0, m - 1) - pi.rows(1, m - 1);
    diff.norm_squared()
}

fn add_smoothing_gradient(g: &mut DMatrix<f64>, pi: &DMatrix<f64>, lambda: f64) {
    let m = pi.nrows();
    for j in 0..pi.ncols() {
        for i in 0..m.saturating_sub(1) {
            let d = 2.0 * lambda * (pi[(i, j)] - pi[(i + 1, j)]);
            g[(i, j)] += d;
            g[(i + 1, j)] -= d;
        }
    }
}

/// Pulls a gradient with respect to `Π` back through the row softmax.
fn softmax_backward(pi: &DMatrix<f64>, g_pi: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(pi.nrows(), pi.ncols());
    for i in 0..pi.nrows() {
        let dot: f64 = (0..pi.ncols()).map(|k| g_pi[(i, k)] * pi[(i, k)]).sum();
        for j in 0..pi.ncols() {
            out[(i, j)] = pi[(i, j)] * (g_pi[(i, j)] - dot);
        }
    }
    out
}

/// Minibatch objective at `softmax_rows(theta)`.
///
/// The data term over the rows in `batch` is scaled by `D/|B|`; with every
/// row selected this is exactly `‖P - FΠ‖²_F + λ·smoothing`.
pub fn objective(
    theta: &Logits,
    probs: &DMatrix<f64>,
    probe_matrix: &DMatrix<f64>,
    lambda: f64,
    batch: &[usize],
) -> Result<f64> {
    let problem = Problem::new(probs, probe_matrix, lambda)?;
    problem.check_pi(&theta.0)?;
    problem.check_batch(batch)?;
    Ok(problem.value(&softmax_unchecked(&theta.0), batch))
}

/// Analytic gradient of [`objective`] with respect to the logits.
pub fn gradient(
    theta: &Logits,
    probs: &DMatrix<f64>,
    probe_matrix: &DMatrix<f64>,
    lambda: f64,
    batch: &[usize],
) -> Result<DMatrix<f64>> {
    let problem = Problem::new(probs, probe_matrix, lambda)?;
    problem.check_pi(&theta.0)?;
    problem.check_batch(batch)?;
    let pi = softmax_unchecked(&theta.0);
    Ok(softmax_backward(&pi, &problem.gradient_pi(&pi, batch)))
}

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: DMatrix<f64>,
    v: DMatrix<f64>,
    t: i32,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl AdamState {
    pub fn new(nrows: usize, ncols: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self { m: DMatrix::zeros(nrows, ncols), v: DMatrix::zeros(nrows, ncols), t: 0, beta1, beta2, epsilon }
    }

    pub fn from_config(nrows: usize, ncols: usize, config: &FitConfig) -> Self {
        Self::new(nrows, ncols, config.beta1, config.beta2, config.epsilon)
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One bias-corrected Adam update of `theta` with learning rate `lr`.
    pub fn step(&mut self, theta: &mut DMatrix<f64>, grad: &DMatrix<f64>, lr: f64) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for ((th, g), (m, v)) in theta.iter_mut().zip(grad.iter()).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *th -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Exponentially decayed learning rate `γ₀ · decay^t`.
pub fn lr_schedule(gamma0: f64, decay: f64, t: u64) -> f64 {
    gamma0 * decay.powf(t as f64)
}

fn initial_logits(m: usize, n: usize, config: &FitConfig, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let normal = Normal::new(0.0, config.init_stddev).map_err(|e| QdtError::Config(e.to_string()))?;
    // Row-major draw order so the initialization does not depend on storage layout.
    let values: Vec<f64> = (0..m * n).map(|_| normal.sample(rng)).collect();
    Ok(DMatrix::from_row_slice(m, n, &values))
}

pub(crate) fn check_shapes(dataset: &Dataset, probes: &ProbeSet) -> Result<()> {
    if dataset.num_probes() != probes.num_probes() {
        return config_err(format!(
            "dataset has {} probes but the probe set has {}",
            dataset.num_probes(),
            probes.num_probes()
        ));
    }
    if dataset.num_outcomes() < 1 {
        return config_err("dataset has no outcomes");
    }
    Ok(())
}

/// Reconstructs `Π` from `dataset` with minibatched Adam on softmax logits.
pub fn fit(dataset: &Dataset, probes: &ProbeSet, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    check_shapes(dataset, probes)?;
    let problem = Problem::new(&dataset.probs, probes.probe_matrix(), config.lambda)?;
    let (m, n) = (probes.hilbert_dim(), dataset.num_outcomes());

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut theta = initial_logits(m, n, config, &mut rng)?;
    let mut adam = AdamState::from_config(m, n, config);
    let mut order: Vec<usize> = (0..dataset.num_probes()).collect();

    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut per_iteration = Vec::with_capacity(config.epochs);
    let mut total = 0.0;
    let mut step: u64 = 0;

    for epoch in 0..config.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let lr = match config.decay_interval {
                DecayInterval::Epoch => lr_schedule(config.learning_rate, config.lr_decay, epoch as u64),
                DecayInterval::Step => lr_schedule(config.learning_rate, config.lr_decay, step),
            };
            let pi = softmax_unchecked(&theta);
            let grad = softmax_backward(&pi, &problem.gradient_pi(&pi, batch));
            adam.step(&mut theta, &grad, lr);
            step += 1;
        }
        let elapsed = start.elapsed().as_secs_f64();
        per_iteration.push(elapsed);
        total += elapsed;

        let loss = problem.full_value(&softmax_unchecked(&theta));
        if !loss.is_finite() {
            return Err(QdtError::Numeric(format!("objective became {loss} after epoch {epoch}")));
        }
        loss_history.push(loss);
    }

    Ok(FitResult {
        pi_hat: DiagonalPovm::from_stochastic(softmax_unchecked(&theta)),
        loss_history,
        wall_clock_seconds: total,
        wall_clock_per_iteration: per_iteration,
        seed: Some(config.seed),
        config_echo: SolverConfig::Gd(config.clone()),
    })
}

/// Mean and spread of the average fidelity across restarts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub reports: Vec<FidelityReport>,
    pub mean: f64,
    pub stddev: f64,
}

impl TrialSummary {
    pub fn from_reports(reports: Vec<FidelityReport>) -> Self {
        let averages: Vec<f64> = reports.iter().map(|r| r.average).collect();
        let (mean, stddev) = mean_and_stddev(&averages);
        Self { reports, mean, stddev }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStartResult {
    pub results: Vec<FitResult>,
    /// Present when a ground truth was supplied.
    pub summary: Option<TrialSummary>,
}

/// Seed used by restart `trial` (counting from 0) of [`multi_start_fit`].
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add(trial as u64)
}

/// Runs [`fit`] from `trials` independent initializations, trial `k` seeded
/// with `config.seed + k`. Trials run in parallel; results keep trial order.
pub fn multi_start_fit(
    dataset: &Dataset,
    probes: &ProbeSet,
    config: &FitConfig,
    trials: usize,
    truth: Option<&DiagonalPovm>,
) -> Result<MultiStartResult> {
    if trials == 0 {
        return config_err("trials must be at least 1");
    }
    let results = (0..trials)
        .into_par_iter()
        .map(|k| {
            let cfg = FitConfig { seed: trial_seed(config.seed, k), ..config.clone() };
            fit(dataset, probes, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = truth
        .map(|t| {
            let reports = results.iter().map(|r| average_fidelity(&r.pi_hat, t)).collect::<Result<Vec<_>>>()?;
            Ok::<_, QdtError>(TrialSummary::from_reports(reports))
        })
        .transpose()?;
    Ok(MultiStartResult { results, summary })
}
