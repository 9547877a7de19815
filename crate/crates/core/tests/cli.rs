use std::path::Path;
use std::process::{Command, Output};

use condshap::config::ExperimentConfig;

fn condshap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_condshap"))
        .args(args)
        .output()
        .unwrap()
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let mut c = ExperimentConfig::default();
    c.output_dir = dir.join("out");
    c.data.n_features = 3;
    c.data.n_train = 150;
    c.data.n_test = 8;
    c.coefficients.beta = vec![0.5, 1.0, -1.0, 0.5];
    c.coefficients.gamma = vec![0.3];
    c.coefficients.pairs = vec![[1, 2]];
    c.truth.k_truth = 100;
    c.evaluation.permutation_shuffles = 100;
    for spec in &mut c.estimators {
        spec.k = 40;
    }
    let path = dir.join("tiny.toml");
    std::fs::write(&path, c.to_toml().unwrap()).unwrap();
    path
}

#[test]
fn init_config_writes_the_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    let out = condshap(&["init-config", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let parsed = ExperimentConfig::load(&path).unwrap();
    assert_eq!(parsed, ExperimentConfig::default());
}

#[test]
fn run_writes_artifacts_and_explain_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let config = config.to_str().unwrap();
    let out = condshap(&["run", "--config", config, "--threads", "1"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in [
        "per_instance.csv",
        "summary.json",
        "explanations.csv",
        "model.json",
        "mae_boxplot.svg",
    ] {
        assert!(dir.path().join("out").join(name).exists(), "{name}");
    }

    let out = condshap(&[
        "explain", "--config", config, "--obs", "2", "--method", "gaussian",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["observation"], 2);
    assert_eq!(json["phi"].as_array().unwrap().len(), 3);
}

#[test]
fn malformed_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "seed = \"not a number\"\n").unwrap();
    let out = condshap(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn unknown_method_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = condshap(&[
        "explain",
        "--config",
        config.to_str().unwrap(),
        "--obs",
        "0",
        "--method",
        "no_such_method",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_method"));
}
