use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DMatrix;
use proptest::prelude::*;
use qdt_cli::matrix_io::{read_matrix, write_matrix};
use qdt_cli::{RunManifest, DATASET_FILE, PROBES_FILE, TRUTH_FILE};

fn qdt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdt")).args(args).output().expect("qdt binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

proptest! {
    #[test]
    fn csv_round_trip_is_bit_exact(
        rows in 1usize..6,
        values in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 30),
    ) {
        let cols = values.len() / rows;
        let m = DMatrix::from_row_slice(rows, cols, &values[..rows * cols]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        prop_assert_eq!(back.shape(), m.shape());
        for (a, b) in m.iter().zip(back.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn simulate_writes_three_csvs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(&qdt(&["simulate", "--out-dir", s(dir.path())]));
    let manifest = RunManifest::read(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(manifest.artifacts, vec![PROBES_FILE, TRUTH_FILE, DATASET_FILE]);
    for a in &manifest.artifacts {
        assert!(dir.path().join(a).exists());
    }
    assert_eq!(read_matrix(&dir.path().join(DATASET_FILE)).unwrap().shape(), (600, 10));
    assert_eq!(read_matrix(&dir.path().join(PROBES_FILE)).unwrap().shape(), (600, 2));
}

#[test]
fn large_configuration_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("large.json");
    std::fs::write(&config, r#"{"hilbert_dim": 200, "outcomes": 25, "probes": 2000}"#).unwrap();
    ok(&qdt(&["simulate", "--config", s(&config), "--out-dir", s(&dir.path().join("data"))]));
    let truth = read_matrix(&dir.path().join("data").join(TRUTH_FILE)).unwrap();
    assert_eq!(truth.shape(), (200, 25));
}

#[test]
fn fit_from_its_own_manifest_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    ok(&qdt(&[
        "simulate",
        "--probes",
        "200",
        "--hilbert-dim",
        "30",
        "--outcomes",
        "6",
        "--sigma",
        "0.1",
        "--seed",
        "3",
        "--out-dir",
        s(&data),
    ]));
    ok(&qdt(&["fit", "--data-dir", s(&data), "--epochs", "15", "--trials", "2", "--out-dir", s(&first)]));
    // the manifest alone locates the data and carries every hyperparameter
    ok(&qdt(&["fit", "--config", s(&first.join("manifest.json")), "--out-dir", s(&second)]));
    for name in ["manifest.json", "povm_hat.csv", "loss_history.csv"] {
        assert_eq!(std::fs::read(first.join(name)).unwrap(), std::fs::read(second.join(name)).unwrap(), "{name}");
    }
    let manifest = RunManifest::read(&first.join("manifest.json")).unwrap();
    assert_eq!(manifest.seeds, vec![3, 4]);
    assert_eq!(manifest.trials.len(), 2);
    assert!(manifest.fidelity_summary.is_some());
    assert!(manifest.artifacts.contains(&"timings.json".to_string()));
    assert_eq!(manifest.data_dir.as_deref(), Some("../data"));
}

#[test]
fn simulate_from_manifest_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&qdt(&[
        "simulate",
        "--probes",
        "50",
        "--hilbert-dim",
        "12",
        "--outcomes",
        "4",
        "--shots",
        "100",
        "--out-dir",
        s(&a),
    ]));
    ok(&qdt(&["simulate", "--config", s(&a.join("manifest.json")), "--out-dir", s(&b)]));
    for name in ["manifest.json", PROBES_FILE, TRUTH_FILE, DATASET_FILE] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn baseline_fit_is_labelled() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&qdt(&["simulate", "--probes", "60", "--hilbert-dim", "15", "--outcomes", "4", "--out-dir", s(&data)]));
    ok(&qdt(&["fit", "--solver", "baseline", "--data-dir", s(&data), "--out-dir", s(&dir.path().join("fit"))]));
    let manifest = RunManifest::read(&dir.path().join("fit/manifest.json")).unwrap();
    assert_eq!(manifest.solver.as_deref(), Some("baseline"));
    assert!(manifest.solver_label.unwrap().contains("projected-gradient"));
    assert!(manifest.seeds.is_empty());
}

#[test]
fn phase_sensitive_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let fit = dir.path().join("fit");
    ok(&qdt(&[
        "simulate",
        "--solver",
        "stiefel",
        "--hilbert-dim",
        "6",
        "--outcomes",
        "3",
        "--probes",
        "10",
        "--phases",
        "8",
        "--out-dir",
        s(&data),
    ]));
    assert_eq!(read_matrix(&data.join(PROBES_FILE)).unwrap().shape(), (80, 2));
    ok(&qdt(&["fit", "--data-dir", s(&data), "--out-dir", s(&fit)]));
    for j in 0..3 {
        let re = read_matrix(&fit.join(format!("povm_hat_{j}_re.csv"))).unwrap();
        let im = read_matrix(&fit.join(format!("povm_hat_{j}_im.csv"))).unwrap();
        assert_eq!(re.shape(), (6, 6));
        assert!((&re - re.transpose()).amax() < 1e-12);
        assert!((&im + im.transpose()).amax() < 1e-12);
    }
    let manifest = RunManifest::read(&fit.join("manifest.json")).unwrap();
    let report = manifest.trials[0].fidelity.as_ref().unwrap();
    assert!(report.per_element.iter().all(|f| f.unwrap() >= 0.95));
}

#[test]
fn fidelity_command_reports_average() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&qdt(&["simulate", "--probes", "20", "--hilbert-dim", "8", "--outcomes", "3", "--out-dir", s(&data)]));
    let truth = data.join(TRUTH_FILE);
    let out = qdt(&["fidelity", "--estimate", s(&truth), "--truth", s(&truth), "--out-dir", s(&dir.path().join("f"))]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("1.000000000000"));
    assert!(dir.path().join("f/fidelity.json").exists());
}

#[test]
fn benchmark_sweeps_emit_two_rows_per_point() {
    let dir = tempfile::tempdir().unwrap();
    for (kind, grid) in [("noise", "0,0.5"), ("data", "40,80")] {
        let out_dir = dir.path().join(kind);
        ok(&qdt(&[
            "benchmark",
            "--kind",
            kind,
            "--grid",
            grid,
            "--hilbert-dim",
            "15",
            "--outcomes",
            "4",
            "--probes",
            "60",
            "--epochs",
            "3",
            "--trials",
            "2",
            "--out-dir",
            s(&out_dir),
        ]));
        let mut reader = csv::Reader::from_path(out_dir.join("benchmark.csv")).unwrap();
        let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(
            header,
            [
                "kind",
                "grid_value",
                "solver",
                "trials",
                "fidelity_mean",
                "fidelity_std",
                "wall_clock_total_s",
                "wall_clock_per_iteration_s"
            ]
        );
        let rows: Vec<qdt_cli::benchmark::BenchmarkRow> = reader.deserialize().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].trials, 2);
        assert_eq!(rows[1].trials, 1);
    }
}

#[test]
fn config_errors_exit_with_one_and_leave_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = qdt(&["simulate", "--outcomes", "100", "--out-dir", s(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(!out.join("manifest.json").exists());

    let res = qdt(&["fit", "--data-dir", s(&dir.path().join("missing")), "--out-dir", s(&out)]);
    assert_eq!(res.status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"epochz": 3}"#).unwrap();
    assert_eq!(qdt(&["simulate", "--config", s(&bad)]).status.code(), Some(1));
    assert_eq!(qdt(&["benchmark", "--out-dir", s(&out)]).status.code(), Some(1));
    assert_eq!(qdt(&["simulate", "--no-such-flag"]).status.code(), Some(1));
}

#[test]
fn numeric_failure_exits_with_two_and_cleans_up() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("out");
    ok(&qdt(&["simulate", "--probes", "50", "--hilbert-dim", "10", "--outcomes", "3", "--out-dir", s(&data)]));
    let res = qdt(&["fit", "--data-dir", s(&data), "--lr", "1e308", "--epochs", "5", "--out-dir", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(std::fs::read_dir(&out).map(|d| d.count()).unwrap_or(0), 0);
}

#[test]
fn dimension_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&qdt(&["simulate", "--probes", "30", "--hilbert-dim", "10", "--outcomes", "3", "--out-dir", s(&data)]));
    std::fs::write(data.join(DATASET_FILE), "0.5,0.5,0\n").unwrap();
    let res = qdt(&["fit", "--data-dir", s(&data), "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("30 probes but 1 dataset rows"));
}
