use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qdissip_cli::commands::reevaluate;
use qdissip_cli::RunConfig;

fn qdissip(args: &[&str], config: &str, dir: &Path) -> Output {
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_qdissip"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn unknown_key_is_rejected_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qdissip(&["optimize"], "model = spin_boson\nfoo = 1\n", tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("foo"));
}

#[test]
fn empty_sweep_grid_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qdissip(&["sweep"], "model = quantum_dot\nalphas =\n", tmp.path());
    assert_ne!(out.status.code(), Some(0));
    let out = qdissip(&["sweep"], "model = quantum_dot\n", tmp.path());
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn optimize_writes_files_that_reproduce_the_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "model = spin_boson\ndelta = 1\nT = 1\nN = 200\nalpha = 0.5\nmax_iters = 300\n";
    let out = qdissip(&["optimize"], text, tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out");
    for f in ["protocol.csv", "trajectory.csv", "cost_history.csv", "summary.json"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }
    let summary = json(&dir.join("summary.json"));
    let cfg = RunConfig::parse(text).unwrap();
    let cost = reevaluate(&cfg.model, &dir.join("protocol.csv"), cfg.u_target, 0.5, cfg.optimizer.kappa).unwrap();
    for (key, value) in [("w_diss", cost.w_diss), ("variance", cost.variance), ("total_J", cost.total_j)] {
        let stored = summary[key].as_f64().or_else(|| summary[key.to_lowercase()].as_f64()).unwrap();
        assert!((stored - value).abs() < 1e-10, "{key}: {stored} vs {value}");
    }
    let history = fs::read_to_string(dir.join("cost_history.csv")).unwrap();
    assert!(history.starts_with("iteration,total_J,best_J"));
}

#[test]
fn validate_passes_on_both_presets() {
    for model in ["spin_boson", "quantum_dot"] {
        let tmp = tempfile::tempdir().unwrap();
        let out = qdissip(&["validate"], &format!("model = {model}\n"), tmp.path());
        assert!(out.status.success(), "{model}: {}", String::from_utf8_lossy(&out.stdout));
        let report = json(&tmp.path().join("out").join("validation.json"));
        assert_eq!(report["passed"], true);
    }
}

#[test]
fn validate_reports_overridden_thresholds() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qdissip(&["validate"], "model = quantum_dot\nfd_tol = 1e-30\nfd_points = 5\n", tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let report = json(&tmp.path().join("out").join("validation.json"));
    assert!((report["thresholds"]["fd_tol"].as_f64().unwrap() / 1e-30 - 1.0).abs() < 1e-12);
    assert_eq!(report["thresholds"]["fd_points"], 5);
    assert_eq!(report["passed"], false);
}

#[test]
fn alpha_sweep_front_has_one_row_per_alpha() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "model = quantum_dot\nN = 100\nalphas = 0:0.05:1\nmax_iters = 20\n";
    let out = qdissip(&["sweep"], text, tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let front = fs::read_to_string(tmp.path().join("out").join("front.csv")).unwrap();
    let mut lines = front.lines();
    assert!(lines.next().unwrap().starts_with("alpha,w_diss,beta_variance"));
    assert_eq!(lines.count(), 21);
    assert!(tmp.path().join("out").join("alpha_0.0500").join("protocol.csv").exists());
}

#[test]
fn beta_sweep_writes_one_directory_per_beta() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "model = quantum_dot\nN = 100\nalpha = 1\nbetas = default\nmax_iters = 20\n";
    let out = qdissip(&["sweep"], text, tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for beta in ["0.5000", "1.0000", "2.0000", "3.0000"] {
        assert!(tmp.path().join("out").join(format!("beta_{beta}")).join("summary.json").exists());
    }
    assert!(String::from_utf8_lossy(&out.stdout).contains("default beta grid"));
}

#[test]
fn rapid_drive_writes_comparison() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qdissip(&["rapid-drive"], "model = spin_boson\ndelta = 0\nN = 200\nmax_iters = 50\n", tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(tmp.path().join("out").join("comparison.csv")).unwrap();
    for label in ["sudden_quench", "rapid_plateau_zeta", "rapid_plateau_lambda", "optimized"] {
        assert!(table.contains(label), "{label} missing");
    }
    let report = json(&tmp.path().join("out").join("rapid_drive.json"));
    assert_eq!(report["solution"]["zeta"], 0.75);
}
