use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spmr_core::backtest::BacktestReport;

fn spmr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spmr"))
        .args(args)
        .output()
        .expect("spawn spmr")
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn generated(dir: &Path) -> PathBuf {
    let o = spmr(&["generate", "--seed", "4", "--out", &s(dir)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    dir.join("prices.csv")
}

#[test]
fn estimate_writes_symmetric_blocks_and_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let prices = generated(dir.path());
    let out = dir.path().join("est");
    let o = spmr(&[
        "estimate",
        &s(&prices),
        "--k",
        "3",
        "--phi-multiplier",
        "2",
        "--out",
        &s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out.join("instance.json"));
    let m = v["m"].as_array().unwrap();
    let a = v["a"].as_array().unwrap();
    let n = m.len();
    assert_eq!(n, 9);
    for i in 0..n {
        for j in 0..n {
            assert_eq!(m[i][j], m[j][i]);
            assert_eq!(a[i][j], a[j][i]);
        }
    }
    // φ = multiplier · median(diag Γ) / 5 with A = Γ + ridge
    let mut diag: Vec<f64> = (0..n).map(|i| a[i][i].as_f64().unwrap()).collect();
    diag.sort_by(f64::total_cmp);
    let phi = v["phi"].as_f64().unwrap();
    assert!((phi - 2.0 * diag[n / 2] / 5.0).abs() <= 1e-6 * phi);
}

#[test]
fn flat_prices_exit_with_estimation_code() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (1..=10).map(|d| format!("2021-01-{d:02},5,7\n")).collect();
    let p = write(dir.path(), "flat.csv", &format!("date,X,Y\n{rows}"));
    let o = spmr(&["estimate", &s(&p), "--k", "1", "--out", &s(dir.path())]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn bad_cells_exit_with_ingest_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.csv", "date,X\n2021-01-01,abc\n");
    let o = spmr(&["estimate", &s(&p), "--out", &s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 2"));
}

#[test]
fn infeasible_threshold_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let inst = r#"{"tickers":["a","b"],"k":1,"phi":3.0,"phi_multiplier":1.0,"rows":0,
        "first_date":"","last_date":"","dropped_rows":0,
        "m":[[1.0,0.0],[0.0,1.0]],"a":[[1.0,0.0],[0.0,2.0]]}"#;
    let p = write(dir.path(), "instance.json", inst);
    let o = spmr(&["solve", &s(&p), "--out", &s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn isotropic_instance_solves_to_a_valid_portfolio() {
    let dir = tempfile::tempdir().unwrap();
    let inst = r#"{"tickers":["a","b","c"],"k":2,"phi":0.5,"phi_multiplier":1.0,"rows":0,
        "first_date":"","last_date":"","dropped_rows":0,
        "m":[[1,0,0],[0,1,0],[0,0,1]],"a":[[1,0,0],[0,1,0],[0,0,1]]}"#;
    let p = write(dir.path(), "instance.json", inst);
    let o = spmr(&["solve", &s(&p), "--out", &s(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("solution.json"));
    let x: Vec<f64> = v["x"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e.as_f64().unwrap())
        .collect();
    assert!((x.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() < 1e-8);
    assert_eq!(v["support"].as_array().unwrap().len(), 2);
    assert!(v["objective"].as_f64().unwrap() <= v["stage_one"]["objective"].as_f64().unwrap());
}

#[test]
fn pipeline_recovers_planted_triple_and_backtests() {
    let dir = tempfile::tempdir().unwrap();
    let prices = generated(dir.path());
    let out = dir.path().join("run");
    let o = spmr(&["pipeline", &s(&prices), "--k", "3", "--out", &s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "instance.json",
        "solution.json",
        "report.json",
        "spread.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report = json(&out.join("report.json"));
    let pnl: f64 = report["pnl"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .sum();
    assert_eq!(pnl, report["cum_pnl"].as_f64().unwrap());
    let csv = std::fs::read_to_string(out.join("spread.csv")).unwrap();
    assert!(csv.starts_with("t,date,spread,position,pnl,roi\n"));
}

#[test]
fn backtest_on_flat_prices_reports_no_volatility() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (1..=6).map(|d| format!("2021-01-{d:02},5,7\n")).collect();
    let p = write(dir.path(), "flat.csv", &format!("date,a,b\n{rows}"));
    let sol = r#"{"tickers":["a","b"],"x":[0.6,0.8]}"#;
    let inst = r#"{"tickers":["a","b"],"k":2,"phi":0.5,"phi_multiplier":1.0,"rows":0,
        "first_date":"","last_date":"","dropped_rows":0,
        "m":[[1,0],[0,2]],"a":[[1,0],[0,1]]}"#;
    let ip = write(dir.path(), "instance.json", inst);
    assert!(spmr(&["solve", &s(&ip), "--out", &s(dir.path())])
        .status
        .success());
    let o = spmr(&[
        "backtest",
        &s(&p),
        &s(&dir.path().join("solution.json")),
        "--out",
        &s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(6));
    let bad = write(dir.path(), "partial.json", sol);
    let o = spmr(&["backtest", &s(&p), &s(&bad), "--out", &s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn report_round_trips_through_json() {
    let dir = tempfile::tempdir().unwrap();
    let prices = generated(dir.path());
    let out = dir.path().join("run");
    assert!(
        spmr(&["pipeline", &s(&prices), "--k", "3", "--out", &s(&out)])
            .status
            .success()
    );
    let text = std::fs::read_to_string(out.join("report.json")).unwrap();
    let report: BacktestReport = serde_json::from_str(&text).unwrap();
    let again: BacktestReport =
        serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    assert_eq!(again, report);
    assert!(!report.trades.events.is_empty());
}

#[test]
fn selfcheck_reports_injected_failures() {
    let o = spmr(&["selfcheck", "--inject-failure"]);
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("FAIL"));
    assert!(!text.contains("0 failing cases"));
}

#[test]
fn usage_errors_do_not_collide_with_infeasible() {
    let o = spmr(&["solve"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(spmr(&["--help"]).status.success());
}
