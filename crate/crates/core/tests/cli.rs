mod common;

use std::process::{Command, Output};

use common::*;

fn isec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_case1(dir: &std::path::Path) -> String {
    let p = dir.join("provincias.csv");
    std::fs::write(&p, case1_csv()).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn align_prints_path() {
    let out = isec(&["align", "cba", "caba"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("insertion"));
    assert!(text.contains("total cost: 1"));

    let matrix = data_path("iso1832_qwerty.json");
    let out = isec(&["align", "AAGX110216", "AGAX110216", "--matrix", matrix.to_str().unwrap(), "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["ops"][0]["kind"], "transposition");
    assert_eq!(v["cp"], 0.0);
}

#[test]
fn analyze_writes_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_case1(dir.path());
    let out_path = dir.path().join("rank.json");
    let out = isec(&[
        "analyze", "--input", &input, "--label-col", "provincia", "--freq-col", "n",
        "--alpha", "0.4", "--k-penalty", "1", "--top-k", "10", "--format", "json",
        "--output", out_path.to_str().unwrap(), "--top-m", "5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = String::from_utf8(out.stderr).unwrap();
    assert!(summary.contains("brute-force pairs:    435"));
    assert!(summary.contains("wall clock"));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out_path).unwrap()).unwrap();
    let pairs = v["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 5);
    for p in pairs {
        assert!(ABBREVIATIONS.contains(&p["label_i"].as_str().unwrap()));
        assert!(ABBREVIATIONS.contains(&p["label_j"].as_str().unwrap()));
    }
    assert_eq!(v["summary"]["morph_evaluations"], 300);
}

#[test]
fn analyze_is_deterministic_on_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_case1(dir.path());
    let run = || isec(&["analyze", "--input", &input, "--label-col", "provincia", "--seed", "9"]).stdout;
    let (a, b) = (run(), run());
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn analyze_reports_errors() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_case1(dir.path());
    let out = isec(&["analyze", "--input", &input, "--label-col", "province"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("province"));

    let out = isec(&["analyze", "--input", &input, "--label-col", "provincia", "--alpha", "1.3"]);
    assert!(!out.status.success());

    let out = isec(&["analyze", "--input", "/nonexistent.csv"]);
    assert!(!out.status.success());
}

#[test]
fn simulate_writes_stats() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_case1(dir.path());
    let out_path = dir.path().join("stats.json");
    let args = [
        "simulate", "--input", &input, "--label-col", "provincia", "--freq-col", "n",
        "--k-penalty", "1", "--alpha", "0.4", "--trials", "3000", "--delta", "0",
        "--seed", "5", "--out", out_path.to_str().unwrap(),
    ];
    let out = isec(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read(&out_path).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(v["stats"]["trials"], 3000);
    assert!(v["spearman"].is_number());
    assert!(isec(&args).status.success());
    assert_eq!(first, std::fs::read(&out_path).unwrap());
}
