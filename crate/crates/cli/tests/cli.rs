use fwl::{format_scenarios, list_scenarios, run_config, CliError, ExperimentConfig, Scenario};
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fwl"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn schema_pointer(text: &str) -> String {
    match ExperimentConfig::from_json(text) {
        Err(CliError::Schema { pointer, .. }) => pointer,
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let p = schema_pointer(r#"{"scenario": "weight-check", "weight": {"family": "constant", "value": 1}, "colour": 3}"#);
    assert_eq!(p, "/colour");
    let p = schema_pointer(r#"{"scenario": "weight-check", "weight": {"family": "constant", "value": 1, "beta": 2}}"#);
    assert!(p.starts_with("/weight"), "{p}");
}

#[test]
fn type_errors_carry_a_pointer() {
    let p = schema_pointer(r#"{"scenario": "berezin-scan", "symbol": {"symbol": "constant", "value": 1}, "radii": [0, "x"]}"#);
    assert_eq!(p, "/radii/1");
    let p = schema_pointer(r#"{"scenario": "counterexample", "grid": {"n": 1, "R": "big", "h": 0.1}}"#);
    assert_eq!(p, "/grid/R");
    let p = schema_pointer(r#"{"scenario": "no-such-thing"}"#);
    assert_eq!(p, "/scenario");
}

#[test]
fn required_keys_are_enforced() {
    assert_eq!(schema_pointer(r#"{"scenario": "toeplitz-norm"}"#), "/symbol");
    assert_eq!(schema_pointer(r#"{"scenario": "projection-norm", "weight": {"family": "constant", "value": 1}}"#), "/sigma");
    assert_eq!(schema_pointer(r#"{"scenario": "weight-check", "weight": {"family": "constant", "value": 1}, "p": 0.5}"#), "/p");
    assert!(ExperimentConfig::from_json(r#"{"scenario": "counterexample"}"#).is_ok());
}

#[test]
fn listing_is_stable_and_complete() {
    let a = format_scenarios();
    assert_eq!(a, format_scenarios());
    let names: Vec<&str> = list_scenarios().iter().map(|s| s.name).collect();
    assert_eq!(names.len(), 10);
    assert_eq!(names, Scenario::ALL.iter().map(|s| s.name()).collect::<Vec<_>>());
    assert!(a.contains("counterexample") && a.contains("projection-norm"));
    let info = list_scenarios();
    let ce = info.iter().find(|s| s.name == "counterexample").unwrap();
    assert!(ce.statement.contains("Gaussian pair"));
    let pn = info.iter().find(|s| s.name == "projection-norm").unwrap();
    assert_eq!(pn.required_keys, vec!["weight", "sigma"]);
}

#[test]
fn constant_weight_gives_a_single_unit_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"scenario": "weight-check", "weight": {"family": "constant", "value": 1.0}}"#);
    let out = dir.path().join("out");
    let st = bin().args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "1"]).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let mut r = csv::Reader::from_path(out.join("characteristic.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 1);
    let value: f64 = rows[0][1].parse().unwrap();
    assert!((value - 1.0).abs() < 1e-8);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["scenario"], "weight-check");
    assert_eq!(summary["pass"], true);
    // defaults are echoed
    assert_eq!(summary["config"]["grid"]["R"], 8.0);
    assert_eq!(summary["config"]["scan"]["step"], 0.25);
    assert_eq!(summary["config"]["seed"], 42);
}

#[test]
fn grid_override_flags_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"scenario": "weight-check", "weight": {"family": "power", "beta": 1.0}, "scan": {"radius": 2.0, "step": 0.5}}"#,
    );
    let out = dir.path().join("out");
    let st = bin()
        .args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--grid-R", "5", "--grid-h", "0.1"])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["grid"]["R"], 5.0);
    assert_eq!(summary["config"]["grid"]["h"], 0.1);
}

#[test]
fn schema_violation_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"scenario": "weight-check", "wieght": {}}"#);
    let o = bin().args(["run", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("schema violation at /"), "{err}");
    assert!(err.contains("wieght"), "{err}");
}

#[test]
fn capacity_errors_surface_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"scenario": "weight-check", "weight": {"family": "constant", "value": 1.0}}"#);
    let o = bin()
        .env("FWL_NODE_CAP", "1000")
        .args(["run", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("node cap exceeded"), "{err}");
}

#[test]
fn threshold_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // boxes too close together for the growth threshold
    let cfg = write_config(dir.path(), r#"{"scenario": "counterexample", "boxes": [2.0, 2.4]}"#);
    let out = dir.path().join("out");
    let o = bin().args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL growth_ratio"));
    assert!(out.join("norms.csv").exists());
}

#[test]
fn unit_symbol_berezin_scan() {
    let cfg = ExperimentConfig::from_json(r#"{"scenario": "berezin-scan", "symbol": {"symbol": "constant", "value": 1.0}}"#).unwrap();
    let out = run_config(&cfg).unwrap();
    assert!(out.report.pass);
    let t = out.table("berezin").unwrap();
    for v in t.column("re").unwrap() {
        assert!((v.parse::<f64>().unwrap() - 1.0).abs() < 1e-6);
    }
    assert_eq!(out.report.metrics["verdict"], "non-compact-consistent");
}

#[test]
fn counterexample_defaults() {
    let out = run_config(&ExperimentConfig::new(Scenario::Counterexample)).unwrap();
    assert_eq!(out.exit_code(), 0);
    let t = out.table("norms").unwrap();
    assert_eq!(t.rows.len(), 3);
    assert_eq!(t.column("R").unwrap(), vec!["2.0000000000000000e0", "3.0000000000000000e0", "4.0000000000000000e0"]);
    assert!(out.metric("growth_ratio").unwrap() >= 2.0);
    assert_eq!(out.report.config.boxes, Some(vec![2.0, 3.0, 4.0]));
}

#[test]
fn csv_is_reproducible() {
    let cfg = ExperimentConfig::from_json(r#"{"scenario": "bergman-containment", "samples": 500, "seed": 7}"#).unwrap();
    let a = run_config(&cfg).unwrap();
    let b = run_config(&cfg).unwrap();
    assert_eq!(a.tables[0].to_csv(), b.tables[0].to_csv());
    let other = ExperimentConfig { seed: 8, ..cfg };
    let c = run_config(&other).unwrap();
    assert_ne!(a.tables[0].to_csv(), c.tables[0].to_csv());
}

#[test]
fn list_subcommand() {
    let o = bin().arg("list").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let s = String::from_utf8_lossy(&o.stdout);
    assert_eq!(s.lines().count(), 11);
    assert!(s.lines().nth(1).unwrap().starts_with("weight-check"));
}
