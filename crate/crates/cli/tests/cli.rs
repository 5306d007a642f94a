use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn rarl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rarl"))
}

fn generate(dir: &Path, seed: u64) -> std::path::PathBuf {
    let path = dir.join("mdp.json");
    let status = rarl()
        .args(["generate", "--states", "4", "--actions", "3", "--min-row-mass", "0.1", "--metric"])
        .args(["--seed", &seed.to_string(), "--out"])
        .arg(&path)
        .status()
        .unwrap();
    assert!(status.success());
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn oracle_report_has_small_residual() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = generate(dir.path(), 3);
    let out = dir.path().join("o");
    let status = rarl()
        .args(["oracle", "--family", "wasserstein", "--radius", "0.2", "--order", "1", "--mdp"])
        .arg(&mdp)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report = read_json(&out.join("oracle.json"));
    assert!(report["residual"].as_f64().unwrap() <= 1e-8);
    for key in ["g", "V", "Q", "policy", "iterations"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "oracle");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn validate_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"num_states":2,"num_actions":1,"kernel":[[[0.5,0.6]],[[1.0,0.0]]],"reward":[[0.0],[2.0]]}"#,
    )
    .unwrap();
    let out = rarl().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stdout.is_empty());

    let good = generate(dir.path(), 0);
    assert!(rarl().arg("validate").arg(&good).status().unwrap().success());
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = generate(dir.path(), 0);
    let code = |args: &[&str]| rarl().args(args).arg("--mdp").arg(&mdp).status().unwrap().code();
    assert_eq!(code(&["oracle", "--family", "nope", "--radius", "0.1"]), Some(2));
    assert_eq!(code(&["oracle", "--family", "tv", "--radius", "1.5"]), Some(2));
    assert_eq!(code(&["oracle", "--family", "tv"]), Some(2));
    let missing = rarl().args(["qlearn", "--config", "/nonexistent/cfg.json"]).status().unwrap();
    assert_eq!(missing.code(), Some(2));
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = generate(dir.path(), 5);
    let first = dir.path().join("a");
    let status = rarl()
        .args(["qlearn", "--family", "tv", "--radius", "0.1", "--iterations", "3000", "--seeds", "0,1"])
        .arg("--mdp")
        .arg(&mdp)
        .arg("--out")
        .arg(&first)
        .status()
        .unwrap();
    assert!(status.success());
    let second = dir.path().join("b");
    let status = rarl()
        .arg("qlearn")
        .arg("--config")
        .arg(first.join("manifest.json"))
        .arg("--out")
        .arg(&second)
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["qlearn_seed0.csv", "qlearn_seed1.csv"] {
        assert_eq!(std::fs::read(first.join(name)).unwrap(), std::fs::read(second.join(name)).unwrap());
    }
    let (ma, mb) = (read_json(&first.join("manifest.json")), read_json(&second.join("manifest.json")));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
}

#[test]
fn sweep_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = generate(dir.path(), 1);
    let out = dir.path().join("s");
    let status = rarl()
        .args(["sweep", "--algorithm", "qlearn", "--family", "contamination"])
        .args(["--grid-iterations", "500,2000", "--grid-radii", "0.05,0.2", "--seeds", "0,1,2"])
        .arg("--mdp")
        .arg(&mdp)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let rows = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 2 * 3);
    let summary = std::fs::read_to_string(out.join("sweep_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4);

    let svg = dir.path().join("p.svg");
    let status = rarl()
        .arg("plot")
        .arg(out.join("sweep.csv"))
        .args(["--x", "transitions", "--y", "error", "--series", "radius", "--log", "--out"])
        .arg(&svg)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<polyline").count(), 2);

    let bad = rarl()
        .arg("plot")
        .arg(out.join("sweep.csv"))
        .args(["--x", "transitions", "--y", "nope", "--out"])
        .arg(&svg)
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("missing column 'nope'"));
}

#[test]
fn config_file_runs_nac_and_diag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("nac.json");
    std::fs::write(
        &cfg,
        r#"{
  "mdp": {"generate": {"num_states": 3, "num_actions": 2, "min_row_mass": 0.1, "seed": 2}},
  "ambiguity": {"family": "contamination", "radius": 0.2},
  "algorithm": {"kind": "nac", "iterations": 3, "eta": 1.0, "critic_mode": "exact"},
  "seeds": [0]
}"#,
    )
    .unwrap();
    let out = dir.path().join("n");
    assert!(rarl().arg("nac").arg("--config").arg(&cfg).arg("--out").arg(&out).status().unwrap().success());
    let csv = std::fs::read_to_string(out.join("nac_seed0.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);

    let wrong = rarl().arg("diag").arg("--config").arg(&cfg).status().unwrap();
    assert_eq!(wrong.code(), Some(2));

    let out = dir.path().join("d");
    let status = rarl()
        .args(["diag", "--family", "tv", "--radius", "0.1", "--iterations", "10", "--mdp"])
        .arg(generate(dir.path(), 4))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report = read_json(&out.join("diag_seed0.json"));
    assert!(report["max_ratio"].as_f64().unwrap() <= 1.0 + 1e-12);
}
