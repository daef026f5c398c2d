use std::process::Command;

use goed::experiment::ExperimentConfig;

fn goed() -> Command {
    Command::new(env!("CARGO_BIN_EXE_goed"))
}

fn small_config(dir: &std::path::Path) -> std::path::PathBuf {
    let mut cfg = ExperimentConfig::example1().rescaled(9, 3);
    cfg.design_sizes = vec![2, 4];
    cfg.sampling.posterior_samples = 50;
    cfg.sampling.random_designs = 2;
    let path = dir.join("small.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

#[test]
fn shipped_configs_match_builtin_examples() {
    let root = env!("CARGO_MANIFEST_DIR");
    let one = ExperimentConfig::load(format!("{root}/configs/example1.toml").as_ref()).unwrap();
    let two = ExperimentConfig::load(format!("{root}/configs/example2.toml").as_ref()).unwrap();
    assert_eq!(one, ExperimentConfig::example1());
    assert_eq!(two, ExperimentConfig::example2());
}

#[test]
fn greedy_prints_design_of_requested_size() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    for method in ["aopt", "gell", "gq"] {
        let out = goed().arg("greedy").arg(&cfg).args(["--method", method, "--k", "3"]).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["method"], method);
        assert_eq!(v["search"]["indices"].as_array().unwrap().len(), 3);
        assert_eq!(v["search"]["trace"].as_array().unwrap().len(), 3);
        assert!(v["estimate"]["value"].as_f64().unwrap().is_finite());
    }
}

#[test]
fn run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let status = goed().arg("run").arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    for f in ["designs.json", "criteria.jsonl", "summary.csv", "manifest.json", "goal_density_gq_4.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("method,k,expansion,q025,q25,q50,q75,q975,mean,std,cv,goal_std,criterion\n"));
    let lines = std::fs::read_to_string(out.join("criteria.jsonl")).unwrap();
    for line in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["design_method"].is_string() && v["value"].is_number());
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = goed().arg("greedy").arg(&cfg).args(["--method", "dopt", "--k", "2"]).output().unwrap();
    assert!(!out.status.success());
    let out = goed().arg("greedy").arg(&cfg).args(["--method", "gq", "--k", "99"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = goed().args(["run", "/nonexistent/config.toml"]).output().unwrap();
    assert!(!out.status.success());
    std::fs::write(dir.path().join("bad.toml"), "n = \"sixteen\"").unwrap();
    let out = goed().arg("run").arg(dir.path().join("bad.toml")).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn validate_reports_json() {
    let out = goed().args(["validate", "--seed", "3"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["seed"], 3);
    assert!(v["checks"].as_array().unwrap().len() >= 9);
}
