use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dgasm::experiment::{ExperimentConfig, CSV_HEADER};

fn dgasm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dgasm")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("cfg.json");
    std::fs::write(&path, json).unwrap();
    path
}

const SMALL: &str = r#"{"scenario":"adaptation","p_values":[2,3],"stage":"stage1-exact"}"#;

#[test]
fn run_emits_header_and_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dgasm(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("adaptation,2,"));
    assert!(lines[2].starts_with("adaptation,3,"));
}

#[test]
fn overrides_and_json_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let file = dir.path().join("rows.json");
    let out = dgasm(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "beta1=0.3",
        "--set",
        "p_values=[2]",
        "--seed",
        "5",
        "--format",
        "json",
        "--out",
        file.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(file).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["beta1"], 0.3);
    assert_eq!(rows[0]["seed"], 5);
    assert!(rows[0]["kappa"].as_f64().unwrap() > 1.0);
}

#[test]
fn repeated_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dgasm(&["run", "--config", cfg.to_str().unwrap(), "--threads", "1"]);
    let b = dgasm(&["run", "--config", cfg.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn unknown_key_and_missing_file_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dgasm(&["run", "--config", cfg.to_str().unwrap(), "--set", "bogus=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    let out = dgasm(&["run", "--config", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let bad = write_config(dir.path(), r#"{"scenario":"adaptation","p_values":[2],"stage":"stage1-exact","gama":3}"#);
    assert_eq!(dgasm(&["run", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn failed_point_is_reported_and_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dgasm(&["run", "--config", cfg.to_str().unwrap(), "--set", "lanczos_max_it=2"]);
    assert_eq!(out.status.code(), Some(1));
    // rows are still written
    assert_eq!(stdout(&out).lines().count(), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Lanczos"));
}

#[test]
fn dyadic_dumps_match_golden_files() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for (p, alpha) in [("6", "1.0"), ("40", "1.2"), ("64", "1.5")] {
        let out = dgasm(&["dyadic", "--p", p, "--alpha", alpha]);
        assert!(out.status.success());
        let expect = std::fs::read_to_string(golden.join(format!("dyadic_p{p}_alpha{alpha}.txt"))).unwrap();
        assert_eq!(stdout(&out), expect, "p = {p}, alpha = {alpha}");
    }
    assert_eq!(stdout(&dgasm(&["dyadic", "--p", "3"])), "0 0\n1 1\n1 0\n");
    assert_eq!(dgasm(&["dyadic", "--p", "3", "--alpha", "0.5"]).status.code(), Some(2));
}

#[test]
fn matrix_export_is_symmetric_matrix_market() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"scenario":"checkerboard","p_values":[2],"stage":"stage1-exact"}"#);
    for kind in ["dg", "cg"] {
        let file = dir.path().join(format!("{kind}.mtx"));
        let out = dgasm(&["matrix", "--config", cfg.to_str().unwrap(), "--kind", kind, "--out", file.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let text = std::fs::read_to_string(file).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("%%MatrixMarket matrix coordinate real"));
        let dims: Vec<usize> = lines.next().unwrap().split_whitespace().map(|s| s.parse().unwrap()).collect();
        assert_eq!(dims[0], dims[1]);
        // nine patches of degree 2: 81 broken nodes, 25 interior conforming nodes
        assert_eq!(dims[0], if kind == "dg" { 81 } else { 25 });
        let mut entries = std::collections::HashMap::new();
        for l in lines {
            let f: Vec<&str> = l.split_whitespace().collect();
            entries.insert((f[0].to_string(), f[1].to_string()), f[2].parse::<f64>().unwrap());
        }
        assert_eq!(entries.len(), dims[2]);
        for ((i, j), v) in &entries {
            let w = entries.get(&(j.clone(), i.clone())).copied().unwrap_or(0.0);
            assert!((v - w).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }
}

#[test]
fn shipped_configurations_are_valid() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut files = Vec::new();
    for dir in [root.clone(), root.join("long")] {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "json") {
                files.push(path);
            }
        }
    }
    assert!(files.len() >= 10);
    for path in files {
        let cfg = ExperimentConfig::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(!cfg.points().is_empty(), "{}", path.display());
    }
}
