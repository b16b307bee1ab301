//! End-to-end tests over the compiled binary.

use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_admm-audit"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn generate_writes_problem_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "generate",
        "--count",
        "3",
        "--seed",
        "7",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for i in 0..3 {
        assert!(dir.path().join(format!("problem-{i}.json")).exists());
    }
}

#[test]
fn solve_honest_run_converges() {
    let out = run(&["solve", "--seed", "1", "--instance", "2"]);
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["termination"], "converged");
    assert!(summary["final_primal_residual"].as_f64().unwrap() <= 1e-4);
}

#[test]
fn solve_loads_generated_problem_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "generate",
        "--seed",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let path = dir.path().join("problem-0.json");
    let from_file = run(&["solve", "--problem", path.to_str().unwrap()]);
    assert!(from_file.status.success());
    let direct = run(&["solve", "--seed", "5", "--instance", "0"]);
    assert_eq!(stdout(&from_file), stdout(&direct));
}

#[test]
fn attacked_solve_with_detector_reports_detection() {
    let out = run(&[
        "solve",
        "--seed",
        "2",
        "--instance",
        "8",
        "--attack",
        "noise",
        "--attack-seed",
        "13",
        "--detect",
    ]);
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["detection"]["verdict"], "attack_detected");
}

#[test]
fn trace_round_trips_through_audit() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let out = run(&[
        "solve",
        "--seed",
        "2",
        "--instance",
        "8",
        "--attack",
        "noise",
        "--attack-seed",
        "13",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let audit = run(&["audit", "--trace", trace.to_str().unwrap()]);
    assert!(audit.status.success());
    let summary: serde_json::Value = serde_json::from_str(&stdout(&audit)).unwrap();
    assert_eq!(summary["verdict"], "attack_detected");
}

#[test]
fn batch_emits_reports_and_replays_identically() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let config = dir_a.path().join("batch.toml");
    std::fs::write(
        &config,
        "count = 6\n\n[generator]\nmaxdim = 4\nscale = 2.5\nseed = 3\n\n\
         [attack]\nmagnitude = 0.1\ndistribution = \"bernoulli_sign\"\n\
         start_iteration = 1\nseed = 9\n\n[attack.vector]\nkind = \"noise_injection\"\n\n\
         [detector]\nmode = \"linked_only\"\ntau_scale = 1e-6\nkappa_max = 1e8\n\
         collinearity_tol = 1e-9\nstrategy = \"evenly_spaced\"\n\
         cadence = \"every_iteration\"\nabort_on_detect = true\n",
    )
    .unwrap();
    for dir in [&dir_a, &dir_b] {
        let out = run(&[
            "batch",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["confusion.csv", "problems.csv", "histogram.csv", "config.json"] {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between replays");
    }
    let problems = std::fs::read_to_string(dir_a.path().join("problems.csv")).unwrap();
    // Two-arm design: 6 ids, clean + attacked rows, plus the header.
    assert_eq!(problems.lines().count(), 13);
}

#[test]
fn env_var_overrides_output_directory() {
    let flag_dir = tempfile::tempdir().unwrap();
    let env_dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "batch",
            "--count",
            "2",
            "--out",
            flag_dir.path().to_str().unwrap(),
        ])
        .env("ADMM_AUDIT_OUT_DIR", env_dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(env_dir.path().join("problems.csv").exists());
    assert!(!flag_dir.path().join("problems.csv").exists());
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "count = 0\n").unwrap();
    let out = run(&["batch", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let malformed = dir.path().join("malformed.toml");
    std::fs::write(&malformed, "count = \"many\"\n").unwrap();
    let out = run(&["batch", "--config", malformed.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_three() {
    let out = run(&["audit", "--trace", "/nonexistent/trace.jsonl"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn audit_does_not_flag_honest_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let out = run(&[
        "solve",
        "--seed",
        "4",
        "--instance",
        "1",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let audit = run(&["audit", "--trace", trace.to_str().unwrap()]);
    assert!(audit.status.success());
    let summary: serde_json::Value = serde_json::from_str(&stdout(&audit)).unwrap();
    assert_ne!(summary["verdict"], "attack_detected");
}
