//! Reconstruction fidelity between POVM elements.
//!
//! For positive operators `A` (truth) and `B` (estimate) the fidelity is
//!
//! ```text
//! F(B, A) = Tr²[√(√A B √A)] / (Tr A · Tr B)
//! ```
//!
//! which equals 1 exactly when `B ∝ A`. For commuting (diagonal) operators
//! with diagonals `p` and `q` this collapses to `(Σ √(pᵢ qᵢ))² / (Σp · Σq)`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detector::DiagonalPovm;
use crate::error::{config_err, domain_err, QdtError, Result};

/// Most negative eigenvalue tolerated as rounding noise in
/// [`matrix_fidelity_oracle`].
pub const PSD_TOLERANCE: f64 = 1e-9;

/// Fidelity between two diagonal positive operators given by their diagonals.
pub fn diagonal_fidelity(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return config_err(format!("length mismatch: {} vs {}", p.len(), q.len()));
    }
    if let Some(bad) = p.iter().chain(q).find(|x| !(x.is_finite() && **x >= 0.0)) {
        return domain_err(format!("diagonal entry {bad} is not a nonnegative number"));
    }
    let trace_p: f64 = p.iter().sum();
    let trace_q: f64 = q.iter().sum();
    if trace_p <= 0.0 || trace_q <= 0.0 {
        return Err(QdtError::UndefinedFidelity("operator has zero trace".into()));
    }
    let overlap: f64 = p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum();
    Ok(overlap * overlap / (trace_p * trace_q))
}

fn psd_sqrt(a: &DMatrix<Complex64>, label: &str) -> Result<(DMatrix<Complex64>, f64)> {
    let eig = SymmetricEigen::new(a.clone());
    let min = eig.eigenvalues.min();
    if min < -PSD_TOLERANCE {
        return domain_err(format!("{label} is not positive semidefinite (eigenvalue {min})"));
    }
    let roots = eig.eigenvalues.map(|l| Complex64::new(l.max(0.0).sqrt(), 0.0));
    let v = &eig.eigenvectors;
    let sqrt = v * DMatrix::from_diagonal(&roots) * v.adjoint();
    Ok((sqrt, a.trace().re))
}

fn check_hermitian(a: &DMatrix<Complex64>, label: &str) -> Result<()> {
    if !a.is_square() {
        return config_err(format!("{label} is not square"));
    }
    let scale = a.norm().max(1.0);
    if (a - a.adjoint()).norm() > 1e-9 * scale {
        return domain_err(format!("{label} is not Hermitian"));
    }
    Ok(())
}

/// Evaluates the fidelity literally through matrix square roots.
///
/// Slow and only meant as a cross-check for [`diagonal_fidelity`] and for
/// non-diagonal reconstructions.
pub fn matrix_fidelity_oracle(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return config_err(format!("shape mismatch: {:?} vs {:?}", a.shape(), b.shape()));
    }
    check_hermitian(a, "first operator")?;
    check_hermitian(b, "second operator")?;
    let (sqrt_a, trace_a) = psd_sqrt(a, "first operator")?;
    psd_sqrt(b, "second operator")?;
    let trace_b = b.trace().re;
    if trace_a <= 0.0 || trace_b <= 0.0 {
        return Err(QdtError::UndefinedFidelity("operator has zero trace".into()));
    }
    let inner = &sqrt_a * b * &sqrt_a;
    let inner = (&inner + inner.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(inner);
    let root_trace: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    Ok(root_trace * root_trace / (trace_a * trace_b))
}

/// Real-matrix convenience wrapper around [`matrix_fidelity_oracle`].
pub fn real_matrix_fidelity_oracle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let lift = |m: &DMatrix<f64>| m.map(|x| Complex64::new(x, 0.0));
    matrix_fidelity_oracle(&lift(a), &lift(b))
}

/// Per-element and average fidelity of a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    /// `None` where an element has zero trace in either POVM.
    pub per_element: Vec<Option<f64>>,
    /// Mean over the defined elements.
    pub average: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FidelityReport {
    /// Builds a report from per-element results, averaging the defined ones.
    pub fn from_elements(per_element: Vec<Option<f64>>) -> Result<Self> {
        let defined: Vec<f64> = per_element.iter().flatten().copied().collect();
        if defined.is_empty() {
            return Err(QdtError::UndefinedFidelity("no POVM element has a defined fidelity".into()));
        }
        let warnings = per_element
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_none())
            .map(|(j, _)| format!("element {j} has zero trace; excluded from the average"))
            .collect();
        let average = defined.iter().sum::<f64>() / defined.len() as f64;
        Ok(Self { per_element, average, warnings })
    }
}

/// Compares corresponding columns of two diagonal POVMs.
pub fn average_fidelity(estimate: &DiagonalPovm, truth: &DiagonalPovm) -> Result<FidelityReport> {
    if estimate.pi().shape() != truth.pi().shape() {
        return config_err(format!("POVM shapes differ: {:?} vs {:?}", estimate.pi().shape(), truth.pi().shape()));
    }
    let per_element = (0..truth.num_outcomes())
        .map(|j| match diagonal_fidelity(&estimate.element(j), &truth.element(j)) {
            Ok(f) => Ok(Some(f)),
            Err(QdtError::UndefinedFidelity(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    FidelityReport::from_elements(per_element)
}

/// Mean and population standard deviation.
pub fn mean_and_stddev(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_trivial_values() {
        assert!((diagonal_fidelity(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(diagonal_fidelity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((diagonal_fidelity(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_trace_is_reported() {
        assert!(matches!(diagonal_fidelity(&[0.0, 0.0], &[1.0, 0.0]), Err(QdtError::UndefinedFidelity(_))));
        assert!(matches!(diagonal_fidelity(&[1.0], &[1.0, 0.0]), Err(QdtError::Config(_))));
        assert!(matches!(diagonal_fidelity(&[-1.0, 2.0], &[1.0, 0.0]), Err(QdtError::Domain(_))));
    }

    #[test]
    fn oracle_trivial_values() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.3, 0.7]));
        assert!((real_matrix_fidelity_oracle(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let id = DMatrix::<f64>::identity(4, 4);
        assert!((real_matrix_fidelity_oracle(&id, &id).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_rejects_non_psd() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        let id = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(real_matrix_fidelity_oracle(&a, &id), Err(QdtError::Domain(_))));
        // rounding-level negativity is clamped
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-12]);
        assert!(real_matrix_fidelity_oracle(&a, &id).is_ok());
    }

    #[test]
    fn oracle_handles_pure_states() {
        // |+⟩⟨+| against |0⟩⟨0| has fidelity |⟨0|+⟩|² = 1/2
        let plus = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let zero = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!((real_matrix_fidelity_oracle(&zero, &plus).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn average_of_identical_povms() {
        let povm = crate::detector::efficient_pnr_povm(10, 4, 0.8).unwrap();
        let report = average_fidelity(&povm, &povm).unwrap();
        assert!(report.per_element.iter().all(|f| (f.unwrap() - 1.0).abs() < 1e-12));
        assert!((report.average - 1.0).abs() < 1e-12);
    }

    #[test]
    fn average_with_one_orthogonal_element() {
        let truth = DiagonalPovm::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        let estimate = DiagonalPovm::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0])).unwrap();
        // element 0: zero trace in the estimate; element 1: (√1·0 + √1·1)²/(2·1) = 0.5
        let report = average_fidelity(&estimate, &truth).unwrap();
        assert_eq!(report.per_element[0], None);
        assert!((report.average - 0.5).abs() < 1e-15);
        assert_eq!(report.warnings.len(), 1);

        let estimate = DiagonalPovm::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let truth = DiagonalPovm::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0])).unwrap();
        // element 0: (0 + 1)²/(1·2) = 0.5 ; element 1 undefined in truth
        let report = average_fidelity(&estimate, &truth).unwrap();
        assert!((report.average - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mean_and_population_stddev() {
        let (m, s) = mean_and_stddev(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
    }
}
