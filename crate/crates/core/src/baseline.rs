//! Projected-gradient reference solver.
//!
//! Minimizes the same convex objective as the gradient-descent solver, but
//! directly over `Π`: a full-batch gradient step followed by Euclidean
//! projection of every row onto the probability simplex. It stands in for an
//! interior-point conic solver when comparing accuracy and run time.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::detector::{Dataset, DiagonalPovm};
use crate::error::{config_err, QdtError, Result};
use crate::fock::ProbeSet;
use crate::gd::{check_shapes, FitResult, Problem, SolverConfig};

/// Human-readable label attached to every baseline output.
pub const BASELINE_LABEL: &str = "projected-gradient baseline (in-repo substitute for an interior-point conic solver)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub step_size: f64,
    pub iterations: usize,
    pub lambda: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { step_size: 1e-3, iterations: 2000, lambda: 0.0 }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return config_err(format!("step_size must be positive, got {}", self.step_size));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return config_err(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        Ok(())
    }
}

/// Euclidean projection of `v` onto `{p : p ≥ 0, Σp = 1}`.
///
/// Sort-and-threshold: with `u` sorted descending, `ρ` is the largest index
/// with `u_ρ > (Σ_{r≤ρ} u_r - 1)/ρ`, and the result is `max(v - τ, 0)` for
/// that threshold `τ`.
pub fn project_to_simplex(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return config_err("cannot project an empty vector");
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(QdtError::Numeric("simplex projection input is not finite".into()));
    }
    let mut out = v.to_vec();
    project_in_place(&mut out, &mut Vec::with_capacity(v.len()));
    Ok(out)
}

fn project_in_place(v: &mut [f64], scratch: &mut Vec<f64>) {
    scratch.clear();
    scratch.extend_from_slice(v);
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (k, u) in scratch.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if *u > t {
            threshold = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - threshold).max(0.0);
    }
}

fn project_rows(pi: &mut DMatrix<f64>, scratch: &mut Vec<f64>) {
    let mut row = vec![0.0; pi.ncols()];
    for i in 0..pi.nrows() {
        for (j, r) in row.iter_mut().enumerate() {
            *r = pi[(i, j)];
        }
        project_in_place(&mut row, scratch);
        for (j, r) in row.iter().enumerate() {
            pi[(i, j)] = *r;
        }
    }
}

/// Full-batch projected gradient descent from the uniform POVM `Π = 1/N`.
pub fn fit_baseline(dataset: &Dataset, probes: &ProbeSet, config: &BaselineConfig) -> Result<FitResult> {
    config.validate()?;
    check_shapes(dataset, probes)?;
    let problem = Problem::new(&dataset.probs, probes.probe_matrix(), config.lambda)?;
    let (m, n) = (probes.hilbert_dim(), dataset.num_outcomes());

    let mut pi = DMatrix::from_element(m, n, 1.0 / n as f64);
    let mut scratch = Vec::with_capacity(n);
    let mut loss_history = Vec::with_capacity(config.iterations);
    let mut per_iteration = Vec::with_capacity(config.iterations);
    let mut total = 0.0;

    for iteration in 0..config.iterations {
        let start = Instant::now();
        let grad = problem.full_gradient_pi(&pi);
        pi -= grad * config.step_size;
        project_rows(&mut pi, &mut scratch);
        let elapsed = start.elapsed().as_secs_f64();
        per_iteration.push(elapsed);
        total += elapsed;

        let loss = problem.full_value(&pi);
        if !loss.is_finite() {
            return Err(QdtError::Numeric(format!("baseline objective became {loss} at iteration {iteration}")));
        }
        loss_history.push(loss);
    }

    Ok(FitResult {
        pi_hat: DiagonalPovm::from_stochastic(pi),
        loss_history,
        wall_clock_seconds: total,
        wall_clock_per_iteration: per_iteration,
        seed: None,
        config_echo: SolverConfig::Baseline(config.clone()),
    })
}
