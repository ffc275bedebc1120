use std::path::Path;
use std::process::{Command, Output};

fn eigengnn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eigengnn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_train_and_embed() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let small = ["--nodes", "200", "--communities", "4", "--p-in", "0.2", "--p-out", "0.02"];

    let out = eigengnn(p, &[&["gen-synth", "--gamma", "1", "--n-train", "5", "--n-val", "10", "--out", "ds"], &small[..]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&p.join("ds/manifest.json"))["config"]["synth"]["num_nodes"], 200);

    let out = eigengnn(p, &["train", "--data", "ds", "--d", "8", "--epochs", "40", "--out", "tr"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let results = std::fs::read_to_string(p.join("tr/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 2);
    assert!(results.lines().nth(1).unwrap().starts_with("Eigen-GCN,1.0,"));
    let history = std::fs::read_to_string(p.join("tr/history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 40);
    assert_eq!(json(&p.join("tr/manifest.json"))["config"]["train"]["max_epochs"], 40);

    let out = eigengnn(p, &["train", "--data", "ds", "--model", "mlp", "--features", "feat", "--epochs", "5", "--out", "mlp"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("MLP_feature"));

    let out = eigengnn(p, &["eigen", "--graph", "ds/edges.txt", "--d", "4", "--features", "ds/features.csv", "--f-mode", "abs", "--out", "eg"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let basis = std::fs::read_to_string(p.join("eg/basis.csv")).unwrap();
    assert!(basis.lines().count() > 200);
    assert!(p.join("eg/initial_basis.csv").exists());
}

#[test]
fn verify_exit_status_follows_checks() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let cfg = r#"{"verify": {"oracle_graphs": 2, "bound_graphs": 3, "limit_graphs": 1, "equivariance_pairs": 2, "gradient_instances": 2}}"#;
    std::fs::write(p.join("v.json"), cfg).unwrap();
    let out = eigengnn(p, &["verify", "--config", "v.json", "--out", "v"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.matches("[PASS]").count(), 5);
    let manifest = json(&p.join("v/manifest.json"));
    assert_eq!(manifest["passed"], true);
    assert_eq!(manifest["config"]["task"], "verify");
    assert_eq!(manifest["config"]["verify"]["oracle_graphs"], 2);
}

#[test]
fn failing_checks_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    // One epoch on one copy per class and fold leaves Eigen-GIN near chance.
    let out = eigengnn(p, &["sweep", "--task", "csl", "--repetitions", "1", "--csl-copies", "5", "--epochs", "1", "--out", "c"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[FAIL]"));
    assert_eq!(json(&p.join("c/manifest.json"))["passed"], false);
}

#[test]
fn bad_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = eigengnn(p, &["eigen", "--graph", "missing.txt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.txt"));
    let out = eigengnn(p, &["sweep", "--gammas", "0,1.5", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let out = eigengnn(p, &["sweep", "--task", "csl", "--features", "feat", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generated_csl_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = eigengnn(p, &["gen-csl", "--copies", "5", "--r-set", "2,3", "--out", "csl"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ds = eigengnn::csl::CslDataset::load(&p.join("csl")).unwrap();
    assert_eq!(ds.graphs.len(), 10);
    assert_eq!(ds.num_classes(), 2);
}
