use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_typicality-lab")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn chsh_default_run() {
    let out = bin(&["chsh", "--seed", "42"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["protocol"], "chsh");
    assert_eq!(v["trials"], 200_000);
    let s = v["s_value"].as_f64().unwrap();
    assert!((s - 2.0 * 2f64.sqrt()).abs() <= 0.025, "{s}");
    assert!(v["cross_check"]["max_abs_diff"].as_f64().unwrap() <= 1e-12);
    assert_eq!(v["failures"], serde_json::json!([]));
    assert!(v.get("threads").is_none());
    assert!(v.get("timestamp").is_none());
}

#[test]
fn chsh_below_minimum_is_usage_error() {
    let out = bin(&["chsh", "--trials", "10", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "usage");
    assert!(out.stdout.is_empty());
}

#[test]
fn missing_seed_is_usage_error() {
    assert_eq!(bin(&["chsh", "--trials", "4000"]).status.code(), Some(2));
}

#[test]
fn chsh_csv_names_the_averages() {
    let out = bin(&["chsh", "--trials", "4000", "--seed", "5", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rs,qs,rt,qt,s_value"));
    assert_eq!(lines.next().unwrap().split(',').count(), 5);
}

#[test]
fn tight_tolerance_fails_with_listed_failure() {
    let out = bin(&["chsh", "--trials", "4000", "--seed", "5", "--tolerance", "0"]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["status"], "fail");
    assert_eq!(v["failures"], serde_json::json!(["s_value"]));
    assert_eq!(v["tolerances"]["overridden"], true);
}

#[test]
fn ghz_run_and_repeat() {
    let a = bin(&["ghz", "--trials", "100000", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    let v = json(&a);
    assert_eq!(v["protocol"], "ghz");
    assert_eq!(v["total_violations"], 0);
    assert_eq!(v["lhv"]["satisfying_count"], 0);
    for triple in ["000", "011", "101", "110"] {
        assert_eq!(v["perfect_correlation"][triple]["violations"], 0);
    }
    let b = bin(&["ghz", "--trials", "100000", "--seed", "7"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn ghz_below_minimum() {
    assert_eq!(bin(&["ghz", "--trials", "7999", "--seed", "7"]).status.code(), Some(2));
}

#[test]
fn lhv_chsh_uniform_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("h.json");
    let mut alphabet = Vec::new();
    for r in [1, -1] {
        for q in [1, -1] {
            for s in [1, -1] {
                for t in [1, -1] {
                    alphabet.push(serde_json::json!([r, q, s, t]));
                }
            }
        }
    }
    let space = serde_json::json!({ "alphabet": alphabet, "weights": vec![1.0 / 16.0; 16] });
    std::fs::write(&h, space.to_string()).unwrap();
    let out = bin(&["lhv", "chsh", "--h-file", path_str(&h)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&out)["exact"]["s_value"].as_f64().unwrap().abs() < 1e-12);

    let out = bin(&["lhv", "chsh", "--sweep", "1000", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["sweep"]["max_s_value"].as_f64().unwrap() <= 2.0 + 1e-12);
}

#[test]
fn lhv_chsh_malformed_h_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("h.json");
    std::fs::write(&h, r#"{"alphabet": [[1,1,1,1]]}"#).unwrap();
    let out = bin(&["lhv", "chsh", "--h-file", path_str(&h)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("weights"));
}

#[test]
fn lhv_ghz_reports_infeasibility() {
    let out = bin(&["lhv", "ghz"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["enumeration"]["satisfying_count"], 0);
    assert_eq!(v["feasibility"]["feasible"], false);
}

#[test]
fn battery_replays_chsh_world() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.json");
    let p = dir.path().join("p.json");
    let out = bin(&["chsh", "--seed", "42", "--world-out", path_str(&w), "--fps-out", path_str(&p)]);
    assert_eq!(out.status.code(), Some(0));
    let out = bin(&["battery", "--world", path_str(&w), "--fps", path_str(&p)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(json(&out)["passed"], 3);
}

#[test]
fn battery_constant_world_fails_fair_coin() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.txt");
    let p = dir.path().join("p.json");
    std::fs::write(&w, vec!["0"; 1000].join(",")).unwrap();
    std::fs::write(&p, r#"{"alphabet":[0,1],"weights":[0.5,0.5]}"#).unwrap();
    let out = bin(&["battery", "--world", path_str(&w), "--fps", path_str(&p)]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["failures"].as_array().unwrap().len(), 3);
}

#[test]
fn battery_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.txt");
    let p = dir.path().join("p.json");
    let other = dir.path().join("other.json");
    std::fs::write(&empty, "").unwrap();
    std::fs::write(&p, r#"{"alphabet":[0,1],"weights":[0.5,0.5]}"#).unwrap();
    std::fs::write(&other, r#"{"alphabet":["x","y"],"weights":[0.5,0.5]}"#).unwrap();
    assert_eq!(bin(&["battery", "--world", path_str(&empty), "--fps", path_str(&p)]).status.code(), Some(2));

    let w = dir.path().join("w.json");
    bin(&["chsh", "--trials", "4000", "--seed", "1", "--world-out", path_str(&w)]);
    let out = bin(&["battery", "--world", path_str(&w), "--fps", path_str(&other)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alphabets do not match"));
}

#[test]
fn random_seed_is_reported() {
    let out = bin(&["chsh", "--trials", "4000", "--seed", "random", "--blocks", "1", "--tolerance", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    let seed: u64 = stderr.trim().strip_prefix("seed: ").unwrap().parse().unwrap();
    assert_eq!(json(&out)["seed"], seed);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("r.json");
    let out = bin(&["lhv", "ghz", "--out", path_str(&o)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&o).unwrap()).unwrap();
    assert_eq!(v["protocol"], "lhv-ghz");
}
