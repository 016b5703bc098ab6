use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use qdt_core::stiefel::*;
use qdt_core::*;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Loss written directly from `p_ij = a_i† W_j† W_j a_i` for an arbitrary
/// (not necessarily orthonormal) stacked matrix.
fn brute_force_loss(w: &DMatrix<Complex64>, ranks: &[usize], data: &PhaseSensitiveDataset) -> f64 {
    let mut total = 0.0;
    for i in 0..data.probes().len() {
        let a = data.amplitude(i);
        let mut start = 0;
        for (j, &r) in ranks.iter().enumerate() {
            let block = w.rows(start, r);
            let e = block.adjoint() * block;
            let p = a.dotc(&(e * &a)).re;
            total += (p - data.probs()[(i, j)]).powi(2);
            start += r;
        }
    }
    total
}

fn small_instance() -> (StiefelPoint, PhaseSensitiveDataset) {
    let truth = random_stiefel(&[2, 2], 4, 11).unwrap();
    let probes = phase_probe_grid(3, 2, 4, 1e-5).unwrap();
    let data = PhaseSensitiveDataset::simulate(&truth.povm_elements(), probes).unwrap();
    (random_stiefel(&[2, 2], 4, 5).unwrap(), data)
}

#[test]
fn wirtinger_gradient_matches_finite_differences() {
    let (point, data) = small_instance();
    assert_eq!(data.probes().len(), 6);
    let grad = euclidean_gradient(&point, &data).unwrap();
    let h = 1e-6;
    let ranks = point.block_ranks().to_vec();
    let mut worst: f64 = 0.0;
    for r in 0..point.w().nrows() {
        for col in 0..point.w().ncols() {
            let mut fd = [0.0; 2];
            for (part, dir) in [c(1.0), Complex64::new(0.0, 1.0)].into_iter().enumerate() {
                let mut plus = point.w().clone();
                plus[(r, col)] += dir * h;
                let mut minus = point.w().clone();
                minus[(r, col)] -= dir * h;
                fd[part] =
                    (brute_force_loss(&plus, &ranks, &data) - brute_force_loss(&minus, &ranks, &data)) / (2.0 * h);
            }
            let expected = Complex64::new(fd[0], fd[1]) / 2.0;
            let err = (grad[(r, col)] - expected).norm() / expected.norm().max(1e-4);
            worst = worst.max(err);
        }
    }
    assert!(worst <= 1e-5, "relative error {worst:e}");
}

#[test]
fn loss_matches_brute_force() {
    let (point, data) = small_instance();
    let fast = loss(&point, &data).unwrap();
    let slow = brute_force_loss(point.w(), point.block_ranks(), &data);
    assert!((fast - slow).abs() <= 1e-12 * slow.max(1.0));
}

#[test]
fn gradient_vanishes_at_exact_data() {
    let point = random_stiefel(&[1, 3], 4, 2).unwrap();
    let probes = phase_probe_grid(4, 3, 4, 1e-5).unwrap();
    let data = PhaseSensitiveDataset::simulate(&point.povm_elements(), probes).unwrap();
    assert!(loss(&point, &data).unwrap() < 1e-26);
    assert!(euclidean_gradient(&point, &data).unwrap().norm() < 1e-12);
}

#[test]
fn single_probe_gradient_by_hand() {
    // Vacuum probe: a = e_0, so W_j a is the first column of W_j and the
    // gradient block is 2 (‖W_j e_0‖² - P_j) W_j e_0 e_0†.
    let point = random_stiefel(&[1, 2], 3, 8).unwrap();
    let probe = CoherentProbe { mean_photon_number: 0.0, phase: 0.0 };
    let data = PhaseSensitiveDataset::new(DMatrix::from_row_slice(1, 2, &[0.3, 0.6]), vec![probe], 3).unwrap();
    let grad = euclidean_gradient(&point, &data).unwrap();
    let mut expected = DMatrix::zeros(3, 3);
    let mut start = 0;
    for (j, &r) in point.block_ranks().iter().enumerate() {
        let col = point.w().view((start, 0), (r, 1)).clone_owned();
        let p = col.norm_squared();
        let target = [0.3, 0.6][j];
        expected.view_mut((start, 0), (r, 1)).copy_from(&col.scale(2.0 * (p - target)));
        start += r;
    }
    assert!((grad - expected).norm() < 1e-14);
}

#[test]
fn predicted_rows_sum_to_poisson_cdf() {
    let point = random_stiefel(&[1, 2, 3], 5, 3).unwrap();
    let probes = phase_probe_grid(6, 4, 5, 1e-5).unwrap();
    let amps: Vec<DVector<Complex64>> =
        probes.iter().map(|p| coherent_amplitude_vector(p.mean_photon_number, p.phase, 5).unwrap()).collect();
    let pred = predicted_probs(&point, &amps).unwrap();
    for (i, p) in probes.iter().enumerate() {
        let cdf = poisson_cdf(p.mean_photon_number, 4).unwrap();
        assert!((pred.row(i).sum() - cdf).abs() <= 1e-10);
    }
}

#[test]
fn vacuum_selector_predicts_vacuum_overlap() {
    // Block 0 = ⟨0|, block 1 = remaining Fock states.
    let mut w = DMatrix::zeros(3, 3);
    for k in 0..3 {
        w[(k, k)] = c(1.0);
    }
    let point = StiefelPoint::new(w, vec![1, 2]).unwrap();
    let mu = 0.7;
    let a = coherent_amplitude_vector(mu, 1.1, 3).unwrap();
    let pred = predicted_probs(&point, &[a]).unwrap();
    assert!((pred[(0, 0)] - (-mu).exp()).abs() < 1e-15);
}

#[test]
fn single_step_keeps_orthonormality_and_descends() {
    let (point, data) = small_instance();
    let grad = euclidean_gradient(&point, &data).unwrap();
    let next = riemannian_step(&point, &grad, 1e-3).unwrap();
    assert!(next.orthonormality_defect() <= 1e-8);
    assert!(loss(&next, &data).unwrap() < loss(&point, &data).unwrap());
}

#[test]
fn zero_gradient_is_a_fixed_point() {
    let point = random_stiefel(&[2, 2], 3, 1).unwrap();
    let zero = DMatrix::zeros(4, 3);
    assert_eq!(riemannian_step(&point, &zero, 0.1).unwrap(), point);
    assert!(matches!(riemannian_step(&point, &zero, 0.0), Err(QdtError::Config(_))));
    assert!(matches!(riemannian_step(&point, &DMatrix::zeros(3, 3), 0.1), Err(QdtError::Config(_))));
}

#[test]
fn thousand_steps_stay_on_the_manifold() {
    let truth = random_stiefel(&[1, 2, 3], 4, 21).unwrap();
    let probes = phase_probe_grid(5, 4, 4, 1e-5).unwrap();
    let data = PhaseSensitiveDataset::simulate(&truth.povm_elements(), probes).unwrap();
    let mut point = random_stiefel(&[1, 2, 3], 4, 22).unwrap();
    for _ in 0..1000 {
        let g = euclidean_gradient(&point, &data).unwrap();
        point = riemannian_step(&point, &g, 0.05).unwrap();
    }
    assert!(point.orthonormality_defect() <= 1e-6);
    for (e, &r) in point.povm_elements().iter().zip(point.block_ranks()) {
        assert!((e - e.adjoint()).norm() <= 1e-12);
        let eig = nalgebra::SymmetricEigen::new(e.clone());
        assert!(eig.eigenvalues.min() >= -1e-10);
        assert!(numerical_rank(e, 1e-8) <= r);
    }
}

#[test]
fn recovers_three_outcome_ideal_detector() {
    let m = 6;
    let truth = ideal_pnr_povm(m, 3).unwrap();
    let probes = phase_probe_grid(10, 8, m, 1e-5).unwrap();
    let data = PhaseSensitiveDataset::from_diagonal_povm(&truth, probes).unwrap();
    let config =
        PhaseSensitiveConfig { block_ranks: PhaseSensitiveConfig::pnr_ranks(m, 3).unwrap(), ..Default::default() };
    let fit = fit_phase_sensitive(&data, &config).unwrap();
    assert!(fit.loss_history.last().unwrap() < &fit.loss_history[0]);
    for (j, e) in fit.elements.iter().enumerate() {
        let t = DMatrix::from_diagonal(&DVector::from_vec(truth.element(j))).map(c);
        let f = matrix_fidelity_oracle(&t, e).unwrap();
        assert!(f >= 0.95, "element {j}: fidelity {f}");
    }
}
