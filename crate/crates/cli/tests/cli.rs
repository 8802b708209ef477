//! End-to-end runs of the `mixglm` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

fn mixglm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixglm")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mixglm-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn predict_json(args: &[&str]) -> serde_json::Value {
    let o = mixglm(&[&["predict"], args].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&stdout(&o)).unwrap()
}

#[test]
fn predict_reports_supercritical_mlr() {
    let v = predict_json(&["--model", "mlr", "--sigma", "0", "--alpha", "0.6", "--delta", "4"]);
    assert_eq!(v["supercritical_1"], true);
    assert!((v["eig1"].as_f64().unwrap() - 0.25).abs() < 1e-9);
    assert!(v["rho_spec_1"].as_f64().unwrap() > 0.5);
    assert!(v["combo_overlap_1"].as_f64().unwrap() >= v["rho_spec_1"].as_f64().unwrap());
}

#[test]
fn predict_below_threshold_has_zero_overlap() {
    let v = predict_json(&["--model", "mlr", "--alpha", "0.6", "--delta", "1"]);
    assert_eq!(v["supercritical_1"], false);
    assert_eq!(v["rho_spec_1"].as_f64().unwrap(), 0.0);
}

#[test]
fn predict_pr_marks_linear_ineffective() {
    let v = predict_json(&["--model", "pr", "--sigma", "0.5", "--alpha", "0.7", "--delta", "6"]);
    assert_eq!(v["linear_ineffective"], true);
    assert_eq!(v["rho_lin_1"].as_f64().unwrap(), 0.0);
}

#[test]
fn predict_rejects_bad_input() {
    let o = mixglm(&["predict", "--alpha", "0.4"]);
    assert_eq!(o.status.code(), Some(2));
    let o = mixglm(&["predict", "--model", "logistic"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_writes_reproducible_csv() {
    let dir = scratch("sweep");
    let run = |name: &str| {
        let path = dir.join(name);
        let o = mixglm(&[
            "sweep", "--d", "100", "--trials", "1", "--delta-grid", "2,5", "--estimators", "lin,spec_opt",
            "--seed-base", "7", "--output", path.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(path).unwrap()
    };
    let a = run("a.csv");
    let b = run("b.csv");
    assert_eq!(a, b);
    let mut lines = a.lines();
    assert_eq!(lines.next().unwrap(), mixglm::experiments::CSV_HEADER.trim_end());
    assert_eq!(lines.count(), 2 * 2 * 2);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = scratch("config");
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "# predict settings\nmodel = pr\nsigma = 0.5\nalpha = 0.7\ndelta = 6\n").unwrap();
    let v = predict_json(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(v["model"], "pr");
    assert_eq!(v["delta"].as_f64().unwrap(), 6.0);
    let v = predict_json(&["--config", cfg.to_str().unwrap(), "--delta", "9"]);
    assert_eq!(v["delta"].as_f64().unwrap(), 9.0);
    std::fs::write(&cfg, "model = pr\nbogus = 1\n").unwrap();
    let o = mixglm(&["predict", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn verify_single_criterion() {
    let o = mixglm(&["verify", "--only", "4"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1);
    assert!(out.contains("PASS"), "{out}");

    let o = mixglm(&["verify", "--only", "4", "--tol-scale", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));

    let o = mixglm(&["verify", "--only", "12"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gamp_and_eigs_emit_csv() {
    let o = mixglm(&["gamp-verify", "--d", "200", "--delta", "6", "--t-max", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("t,beta_t2,chi1_t,"));
    assert_eq!(out.lines().count(), 6);
    assert!(String::from_utf8_lossy(&o.stderr).contains("iterations=5"));

    let o = mixglm(&["eigs", "--d", "150", "--delta", "6", "--seeds", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("seed,lambda1,lambda2,lambda3,pred1,pred2,pred3"));
    assert_eq!(out.lines().count(), 3);
}
