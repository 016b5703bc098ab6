use proptest::prelude::*;
use qdt_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Projection onto the 2-simplex by enumerating every support set: on each
/// face the minimizer is the affine projection, and the best feasible face
/// candidate is the global minimizer.
fn face_enumeration_projection(v: [f64; 3]) -> [f64; 3] {
    let mut best = [f64::NAN; 3];
    let mut best_dist = f64::INFINITY;
    for mask in 1u8..8 {
        let support: Vec<usize> = (0..3).filter(|i| mask & (1 << i) != 0).collect();
        let shift = (support.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / support.len() as f64;
        let mut x = [0.0; 3];
        for &i in &support {
            x[i] = v[i] - shift;
        }
        if x.iter().any(|xi| *xi < 0.0) {
            continue;
        }
        let dist: f64 = (0..3).map(|i| (x[i] - v[i]).powi(2)).sum();
        if dist < best_dist {
            best_dist = dist;
            best = x;
        }
    }
    best
}

#[test]
fn projection_matches_face_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let v = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let fast = project_to_simplex(&v).unwrap();
        let slow = face_enumeration_projection(v);
        for k in 0..3 {
            assert!((fast[k] - slow[k]).abs() <= 1e-8, "{v:?}: {fast:?} vs {slow:?}");
        }
    }
}

#[test]
fn projection_handles_ties_and_large_inputs() {
    let p = project_to_simplex(&[5.0, 5.0, 5.0, 5.0]).unwrap();
    assert!(p.iter().all(|x| (x - 0.25).abs() < 1e-15));
    let p = project_to_simplex(&[1e8, -1e8, 0.0]).unwrap();
    assert_eq!(p, vec![1.0, 0.0, 0.0]);
}

proptest! {
    #[test]
    fn projection_is_idempotent_and_feasible(v in proptest::collection::vec(-10.0f64..10.0, 1..40)) {
        let once = project_to_simplex(&v).unwrap();
        prop_assert!(once.iter().all(|x| *x >= 0.0));
        prop_assert!((once.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let twice = project_to_simplex(&once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn projection_is_nonexpansive(
        a in proptest::collection::vec(-5.0f64..5.0, 6),
        b in proptest::collection::vec(-5.0f64..5.0, 6),
    ) {
        let pa = project_to_simplex(&a).unwrap();
        let pb = project_to_simplex(&b).unwrap();
        let d_in: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
        let d_out: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y).powi(2)).sum();
        prop_assert!(d_out <= d_in + 1e-12);
    }
}

#[test]
fn small_step_loss_is_monotone() {
    let probes = build_probe_grid(100, 20, 1e-5).unwrap();
    let truth = efficient_pnr_povm(20, 5, 0.9).unwrap();
    let data = simulate_dataset(&truth, &probes, 0.0, 0, None).unwrap();
    let cfg = BaselineConfig { step_size: 1e-4, iterations: 300, lambda: 1e-3 };
    let result = fit_baseline(&data, &probes, &cfg).unwrap();
    for pair in result.loss_history.windows(2) {
        assert!(pair[1] <= pair[0] * (1.0 + 1e-12), "{} -> {}", pair[0], pair[1]);
    }
    assert_eq!(result.seed, None);
    assert_eq!(result.wall_clock_per_iteration.len(), 300);
}

#[test]
fn baseline_improves_on_uniform_start() {
    let probes = build_probe_grid(600, 60, 1e-5).unwrap();
    let truth = ideal_pnr_povm(60, 10).unwrap();
    let data = simulate_dataset(&truth, &probes, 0.0, 0, None).unwrap();
    let start = fit_baseline(&data, &probes, &BaselineConfig { iterations: 0, ..Default::default() }).unwrap();
    let result = fit_baseline(&data, &probes, &BaselineConfig::default()).unwrap();
    let f0 = average_fidelity(&start.pi_hat, &truth).unwrap().average;
    let f1 = average_fidelity(&result.pi_hat, &truth).unwrap().average;
    assert!(f1 > f0, "{f0} -> {f1}");
    assert!(result.loss_history.last() < result.loss_history.first());
}

#[test]
fn baseline_config_validation() {
    let probes = build_probe_grid(20, 10, 1e-5).unwrap();
    let data = simulate_dataset(&ideal_pnr_povm(10, 3).unwrap(), &probes, 0.0, 0, None).unwrap();
    for cfg in [
        BaselineConfig { step_size: 0.0, ..Default::default() },
        BaselineConfig { step_size: f64::NAN, ..Default::default() },
        BaselineConfig { lambda: -1.0, ..Default::default() },
    ] {
        assert!(matches!(fit_baseline(&data, &probes, &cfg), Err(QdtError::Config(_))));
    }
}
