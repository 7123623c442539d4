//! End-to-end tests of the `inertia` binary: exit codes, output files, and
//! byte-level determinism against golden files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_inertia"));
    cmd.env("INERTIA_LOG", "quiet");
    cmd
}

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn help_exits_zero() {
    let out = run(bin().arg("--help"));
    assert_success(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["identify", "check", "realize", "simulate", "curve", "export-sdp"] {
        assert!(text.contains(sub), "help must mention {sub}");
    }
}

#[test]
fn usage_errors_exit_one() {
    let out = run(bin().arg("identify"));
    assert_eq!(out.status.code(), Some(1), "missing required flags");

    let out = run(bin().args([
        "identify",
        "--model",
        "/nonexistent/model.json",
        "--data",
        "/nonexistent/data.csv",
    ]));
    assert_eq!(out.status.code(), Some(1), "missing file is a usage error");
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));

    let out = run(bin().arg("frobnicate"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_model = dir.path().join("bad.json");
    std::fs::write(&bad_model, "{\"format\": 1, \"name\": \"x\", \"bodies\": []}").unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "t,q1,tau1\n0,0,0\n").unwrap();
    let out = run(bin().args([
        "identify",
        "--model",
        bad_model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(2));
}

fn simulate_pendulum(dir: &Path, noise: &str, seed: &str, duration: &str) -> PathBuf {
    let csv = dir.join("pendulum.csv");
    let out = run(bin().args([
        "simulate",
        "--model",
        models().join("single_pendulum.json").to_str().unwrap(),
        "--params",
        models().join("single_pendulum_params.json").to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
        "--duration",
        duration,
        "--rate",
        "200",
        "--noise-std",
        noise,
        "--seed",
        seed,
    ]));
    assert_success(&out);
    csv
}

#[test]
fn simulate_identify_check_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate_pendulum(dir.path(), "0.0", "3", "6");
    let run_dir = dir.path().join("run");
    let out = run(bin().args([
        "identify",
        "--model",
        models().join("single_pendulum.json").to_str().unwrap(),
        "--data",
        csv.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
        "--level",
        "full+ellipsoid",
        "--ellipsoids",
        models().join("single_pendulum_ellipsoids.json").to_str().unwrap(),
        "--trust-derivatives",
        "--regularization",
        "0",
        "--coulomb-deadband",
        "0",
    ]));
    assert_success(&out);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["solver"]["status"], "Optimal");
    assert!(report["validation"]["overall_rms"].as_f64().unwrap() < 1e-5);
    assert!(run_dir.join("residuals.csv").exists());

    // The identified parameters pass their own consistency check.
    let check_out = dir.path().join("check.json");
    let out = run(bin().args([
        "check",
        "--model",
        models().join("single_pendulum.json").to_str().unwrap(),
        "--params",
        run_dir.join("identified_params.json").to_str().unwrap(),
        "--ellipsoids",
        models().join("single_pendulum_ellipsoids.json").to_str().unwrap(),
        "--out",
        check_out.to_str().unwrap(),
    ]));
    assert_success(&out);
    let check: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&check_out).unwrap()).unwrap();
    assert_eq!(check["all_fully_consistent"], true);
    assert_eq!(check["all_realizable"], true);
}

#[test]
fn identify_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate_pendulum(dir.path(), "0.05", "11", "6");
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let run_dir = dir.path().join(name);
        let out = run(bin().args([
            "identify",
            "--model",
            models().join("single_pendulum.json").to_str().unwrap(),
            "--data",
            csv.to_str().unwrap(),
            "--out",
            run_dir.to_str().unwrap(),
            "--trust-derivatives",
        ]));
        assert_success(&out);
        outputs.push((
            std::fs::read(run_dir.join("identified_params.json")).unwrap(),
            std::fs::read(run_dir.join("residuals.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "params must be bit-stable");
    assert_eq!(outputs[0].1, outputs[1].1, "residuals must be bit-stable");
}

#[test]
fn degenerate_ellipsoids_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate_pendulum(dir.path(), "0.0", "3", "6");
    let tiny = dir.path().join("tiny.json");
    std::fs::write(
        &tiny,
        r#"{"format":1,"ellipsoids":[{"body":0,"center":[0,0,-0.12],"semi_axes":[1e-8,1e-8,1e-8]}]}"#,
    )
    .unwrap();
    let out = run(bin().args([
        "identify",
        "--model",
        models().join("single_pendulum.json").to_str().unwrap(),
        "--data",
        csv.to_str().unwrap(),
        "--out",
        dir.path().join("bad").to_str().unwrap(),
        "--level",
        "full+ellipsoid",
        "--ellipsoids",
        tiny.to_str().unwrap(),
        "--trust-derivatives",
    ]));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("solver"));
}

#[test]
fn check_flags_triangle_violation_and_repairs() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("violator.json");
    std::fs::write(
        &bad,
        r#"{
  "format": 1,
  "bodies": [[1.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 1.0, 0.0, 1.0]],
  "friction": {"viscous": [0.0], "coulomb": [0.0]}
}"#,
    )
    .unwrap();
    let repaired = dir.path().join("repaired.json");
    let out = run(bin().args([
        "check",
        "--model",
        models().join("single_pendulum.json").to_str().unwrap(),
        "--params",
        bad.to_str().unwrap(),
        "--repair",
        "--repaired-out",
        repaired.to_str().unwrap(),
    ]));
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(report["all_fully_consistent"], false);
    assert_eq!(report["all_semi_consistent"], true);
    let margins = report["bodies"][0]["report"]["triangle_margins"]
        .as_array()
        .unwrap();
    // Margins are ordered by ascending principal moment; the violated one
    // belongs to the largest moment.
    assert!(margins[2].as_f64().unwrap() < 0.0, "violated margin is negative");

    // The repaired file projects onto diag(4,2,2).
    let fixed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&repaired).unwrap()).unwrap();
    let body = fixed["bodies"][0].as_array().unwrap();
    assert!((body[4].as_f64().unwrap() - 4.0).abs() < 1e-3);
    assert!((body[7].as_f64().unwrap() - 2.0).abs() < 1e-3);

    // And now passes the check.
    let out = run(bin().args([
        "check",
        "--model",
        models().join("single_pendulum.json").to_str().unwrap(),
        "--params",
        repaired.to_str().unwrap(),
    ]));
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(report["all_semi_consistent"], true);
}

#[test]
fn realize_box_fixture() {
    let dir = tempfile::tempdir().unwrap();
    // Uniform box, m = 12, dimensions (1,2,3): I_com = diag(13,10,5).
    let params = dir.path().join("box.json");
    std::fs::write(
        &params,
        r#"{
  "format": 1,
  "bodies": [[12.0, 0.0, 0.0, 0.0, 13.0, 0.0, 0.0, 10.0, 0.0, 5.0]],
  "friction": {"viscous": [0.0], "coulomb": [0.0]}
}"#,
    )
    .unwrap();
    let out = run(bin().args([
        "realize",
        "--model",
        models().join("single_pendulum.json").to_str().unwrap(),
        "--params",
        params.to_str().unwrap(),
    ]));
    assert_success(&out);
    let json: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    let points = json[0]["points"].as_array().unwrap();
    assert_eq!(points.len(), 4);
    let total: f64 = points.iter().map(|p| p["mass"].as_f64().unwrap()).sum();
    assert!((total - 12.0).abs() < 1e-9);

    // A point mass cannot be realized: data error.
    std::fs::write(
        &params,
        r#"{
  "format": 1,
  "bodies": [[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]],
  "friction": {"viscous": [0.0], "coulomb": [0.0]}
}"#,
    )
    .unwrap();
    let out = run(bin().args([
        "realize",
        "--model",
        models().join("single_pendulum.json").to_str().unwrap(),
        "--params",
        params.to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn curve_emits_plot_ready_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate_pendulum(dir.path(), "0.1", "5", "8");
    let out_csv = dir.path().join("curve.csv");
    let out = run(bin().args([
        "curve",
        "--model",
        models().join("single_pendulum.json").to_str().unwrap(),
        "--data",
        csv.to_str().unwrap(),
        "--out",
        out_csv.to_str().unwrap(),
        "--levels",
        "none,full",
        "--sizes",
        "100,400",
        "--trust-derivatives",
    ]));
    assert_success(&out);
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "level,n_samples,overall_rms,rms1,status,objective");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("none,100,"));
    assert!(rows[3].starts_with("full,400,"));
    assert!(rows.iter().all(|r| r.contains(",optimal,")));
}

#[test]
fn export_sdp_round_trip_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate_pendulum(dir.path(), "0.05", "9", "6");
    let prog_path = dir.path().join("prog.icp");
    let out = run(bin().args([
        "export-sdp",
        "--model",
        models().join("single_pendulum.json").to_str().unwrap(),
        "--data",
        csv.to_str().unwrap(),
        "--out",
        prog_path.to_str().unwrap(),
        "--trust-derivatives",
    ]));
    assert_success(&out);
    let text = std::fs::read_to_string(&prog_path).unwrap();
    assert!(text.starts_with("icp 1\n"));
    assert!(text.contains("cone psd 4"));

    // Solve in-process, feed the solution back through --compare.
    let prog = inertia_cli::icp::read_program(&text).unwrap();
    let sol = inertia_core::sdp::solve(&prog, &Default::default());
    assert_eq!(sol.status, inertia_core::sdp::SolveStatus::Optimal);
    let sol_path = dir.path().join("sol.txt");
    std::fs::write(&sol_path, inertia_cli::icp::write_solution(&sol.x)).unwrap();
    let out = run(bin().args([
        "export-sdp",
        "--model",
        models().join("single_pendulum.json").to_str().unwrap(),
        "--data",
        csv.to_str().unwrap(),
        "--out",
        prog_path.to_str().unwrap(),
        "--compare",
        sol_path.to_str().unwrap(),
        "--trust-derivatives",
    ]));
    assert_success(&out);
    let cmp: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert!(cmp["worst_cone_violation"].as_f64().unwrap() < 1e-6);
}

#[test]
fn options_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate_pendulum(dir.path(), "0.0", "3", "6");
    let options = dir.path().join("opts.json");
    std::fs::write(
        &options,
        r#"{"level": "semi", "regularization": 1e-4, "trust_derivatives": true}"#,
    )
    .unwrap();
    let run_dir = dir.path().join("run");
    // Flags say full+ellipsoid without ellipsoids (which would be a data
    // error); the options file downgrades to semi, so the run succeeds.
    let out = run(bin().args([
        "identify",
        "--model",
        models().join("single_pendulum.json").to_str().unwrap(),
        "--data",
        csv.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
        "--level",
        "full+ellipsoid",
        "--options",
        options.to_str().unwrap(),
    ]));
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["level"], "semi");
    assert_eq!(report["regularization"], 1e-4);

    // Unknown option keys are rejected rather than silently ignored.
    std::fs::write(&options, r#"{"levle": "semi"}"#).unwrap();
    let out = run(bin().args([
        "identify",
        "--model",
        models().join("single_pendulum.json").to_str().unwrap(),
        "--data",
        csv.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
        "--options",
        options.to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn golden_simulate_output() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("golden_run.csv");
    let out = run(bin().args([
        "simulate",
        "--model",
        models().join("single_pendulum.json").to_str().unwrap(),
        "--params",
        models().join("single_pendulum_params.json").to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
        "--duration",
        "0.02",
        "--rate",
        "500",
        "--noise-std",
        "0.25",
        "--seed",
        "42",
    ]));
    assert_success(&out);
    let produced = std::fs::read_to_string(&csv).unwrap();
    let expected = std::fs::read_to_string(golden("simulate_pendulum.csv")).unwrap();
    assert_eq!(produced, expected, "simulate output drifted from golden file");
}

#[test]
fn golden_check_report() {
    let out = run(bin().args([
        "check",
        "--model",
        models().join("cheetah_leg.json").to_str().unwrap(),
        "--params",
        models().join("cheetah_leg_params.json").to_str().unwrap(),
        "--ellipsoids",
        models().join("cheetah_leg_ellipsoids.json").to_str().unwrap(),
    ]));
    assert_success(&out);
    let produced = String::from_utf8_lossy(&out.stdout);
    let expected = std::fs::read_to_string(golden("check_cheetah_leg.json")).unwrap();
    assert_eq!(produced.trim_end(), expected.trim_end(), "check report drifted");
}
