use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use subnewton::trace::{read_trace, TRACE_COLUMNS};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subnewton"))
        .args(args)
        .env("SUBNEWTON_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn strip_wall_clock(csv: &str) -> String {
    let idx = TRACE_COLUMNS.iter().position(|c| *c == "wall_ms").unwrap();
    csv.lines()
        .map(|l| {
            let mut cells: Vec<&str> = l.split(',').collect();
            cells.remove(idx);
            cells.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn train_fista_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let summary = dir.path().join("summary.json");
    let out = run(&[
        "train",
        "--synthetic",
        "n=200,d=10",
        "--solver",
        "fista",
        "--trace",
        trace.to_str().unwrap(),
        "--summary",
        summary.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_trace(fs::File::open(&trace).unwrap()).unwrap();
    assert!(!rows.is_empty());
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(s["solver"], "fista");
    assert!(s["final_objective"].as_f64().unwrap() < std::f64::consts::LN_2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("final F ="));
}

#[test]
fn missing_data_file_exits_2() {
    let out = run(&["train", "--data", "/definitely/not/here.svm", "--solver", "fista"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/definitely/not/here.svm"), "{err}");
}

#[test]
fn malformed_data_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.svm");
    fs::write(&path, "1 3:1.0 2:4.0\n").unwrap();
    let out = run(&["train", "--data", path.to_str().unwrap(), "--solver", "fista"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&["train", "--synthetic", "n=50,d=3"]).status.code(), Some(1), "stochastic solver without seed");
    assert_eq!(run(&["train", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&["train", "--solver", "fista"]).status.code(), Some(1), "no data source");
    assert_eq!(
        run(&["train", "--synthetic", "n=50,d=3", "--seed", "1", "--theta", "2"]).status.code(),
        Some(1)
    );
    let out = run(&["sweep-inner", "--synthetic", "n=50,d=3", "--seed", "1", "--inner-list", "0,1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reruns_are_identical_apart_from_wall_clock() {
    let dir = tempfile::tempdir().unwrap();
    let mut traces = Vec::new();
    for solver in ["prox-newton", "saga"] {
        let mut pair = Vec::new();
        for k in 0..2 {
            let path = dir.path().join(format!("{solver}-{k}.csv"));
            let out = run(&[
                "train",
                "--synthetic",
                "n=300,d=8,seed=4",
                "--solver",
                solver,
                "--seed",
                "11",
                "--epochs",
                "10",
                "--trace",
                path.to_str().unwrap(),
            ]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            pair.push(strip_wall_clock(&fs::read_to_string(&path).unwrap()));
        }
        assert_eq!(pair[0], pair[1], "{solver}");
        traces.push(pair.remove(0));
    }
    assert_ne!(traces[0], traces[1]);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"synthetic": "n=100,d=5,seed=2", "solver": "fista", "lambda1": 1000.0, "epochs": 5}"#).unwrap();
    let summary = dir.path().join("s.json");
    let out = run(&["train", "--config", cfg.to_str().unwrap(), "--summary", summary.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(s["nnz_w"], 0, "huge lambda1 from the file zeroes the model");

    let out = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--lambda1",
        "0.0001",
        "--summary",
        summary.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert!(s["nnz_w"].as_u64().unwrap() > 0, "flag overrides the file");
    assert_eq!(s["config"]["lambda1"], 0.0001);

    fs::write(&cfg, r#"{"lamda1": 1}"#).unwrap();
    assert_eq!(run(&["train", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn compare_shares_one_reference() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("cmp.csv");
    let out = run(&[
        "compare",
        "--synthetic",
        "n=200,d=6,seed=3",
        "--solvers",
        "saga,svrg",
        "--seed",
        "5",
        "--epochs",
        "5",
        "--output",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&out_path);
    assert_eq!(header, ["solver", "metric", "x", "F_minus_Fstar"]);
    // both solvers start from w = 0, so their first gaps coincide exactly
    let first = |s: &str| rows.iter().find(|r| r[0] == s && r[1] == "evals").unwrap()[3].clone();
    assert_eq!(first("saga"), first("svrg"));
    assert!(rows.iter().all(|r| r[1] == "evals" || r[1] == "ms"));

    let single = dir.path().join("single.csv");
    let out = run(&[
        "compare",
        "--synthetic",
        "n=200,d=6,seed=3",
        "--solvers",
        "fista",
        "--epochs",
        "5",
        "--output",
        single.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let (header, rows) = read_csv(&single);
    assert_eq!(header, ["solver", "metric", "x", "F_minus_Fstar"]);
    assert!(rows.iter().all(|r| r[0] == "fista"));
}

#[test]
fn sweep_single_inner() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("sweep.csv");
    let out = run(&[
        "sweep-inner",
        "--synthetic",
        "n=200,d=6,seed=3",
        "--inner-list",
        "2",
        "--seed",
        "5",
        "--max-outer",
        "5",
        "--output",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&out_path);
    assert_eq!(header, ["inner", "t", "evals", "F_minus_Fstar"]);
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[0] == "2"));
}

#[test]
fn diagnose_squared_loss_is_clean() {
    let out = run(&["diagnose", "--synthetic", "n=100,d=5,seed=1", "--loss", "squared", "--trials", "50"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["selfconcordance"]["trials"], 50);
    assert_eq!(v["n"], 100);
}
