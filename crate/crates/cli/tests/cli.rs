use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perc-bound"))
        .args(args)
        .env_remove("PERC_BOUND_THREADS")
        .output()
        .expect("failed to spawn perc-bound")
}

fn json(args: &[&str]) -> Value {
    let mut full = vec!["--format", "json"];
    full.extend_from_slice(args);
    let out = run(&full);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn strip_time(mut v: Value) -> Value {
    match &mut v {
        Value::Object(map) => {
            map.remove("wall_time");
            for x in map.values_mut() {
                *x = strip_time(x.take());
            }
        }
        Value::Array(items) => {
            for x in items.iter_mut() {
                *x = strip_time(x.take());
            }
        }
        _ => {}
    }
    v
}

#[test]
fn compute_json_fields() {
    let v = json(&["compute", "--model", "bond-vl2", "--space", "4"]);
    assert_eq!(v["schema"], "perc-bound/1");
    assert_eq!(v["model"], "bond-vl2");
    assert_eq!(v["state_count"], 8);
    let bound = v["bound"].as_f64().unwrap();
    assert_eq!((bound * 1e6).round() / 1e6, bound);
    assert!(v["lambda_at_bound"].as_f64().unwrap() < 1.0 - 1e-6);
}

#[test]
fn deterministic_across_threads_and_runs() {
    for args in [
        vec!["compute", "--model", "site-alt2", "--space", "7"],
        vec!["compute", "--model", "inhom-2", "--space", "6", "--p2", "0.7"],
        vec!["compute", "--model", "bond-vl2", "--space", "8", "--backend", "transfer"],
    ] {
        let with = |threads: &str| {
            let mut a = vec!["--threads", threads];
            a.extend_from_slice(&args);
            strip_time(json(&a))
        };
        let one = with("1");
        assert_eq!(one, with("4"), "{args:?}");
        assert_eq!(one, with("1"), "{args:?}");
    }
}

#[test]
fn json_round_trip_through_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    let out = run(&["--format", "json", "--output", path.to_str().unwrap(), "compute", "--model", "bond-alt2", "--space", "5"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let again: Value = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(v, again);
    assert_eq!(v["space"], "P(5)");
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| run(args).status.code().unwrap();
    assert_eq!(code(&["compute", "--model", "bond-vl2", "--space", "4"]), 0);
    assert_eq!(code(&["compute", "--model", "no-such-model", "--space", "4"]), 2);
    assert_eq!(code(&["compute", "--model", "bond-vl2", "--space", "4,1,9"]), 2);
    assert_eq!(code(&["compute", "--model", "inhom-1", "--space", "4"]), 2);
    assert_eq!(code(&["compute", "--model", "bond-vl2", "--space", "4", "--bisect-tol", "1e-12"]), 2);
    assert_eq!(code(&["compute", "--model", "bond-vl2", "--space", "8", "--max-iter", "3"]), 3);
    assert_eq!(
        code(&["compute", "--model", "bond-vl2", "--space", "8", "--backend", "matrix", "--max-nonzeros", "10"]),
        4
    );
}

#[test]
fn exact_oracle_single_step() {
    let v = json(&["oracle", "exact", "--model", "bond-vl2", "--n", "1", "--p", "0.5"]);
    assert!((v["probability"].as_f64().unwrap() - 0.75).abs() < 1e-12);
}

#[test]
fn inhomogeneous_table_small_window() {
    let v = json(&["tables", "inhomogeneous", "--k", "8"]);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 10);
    for row in rows {
        let bound = row["result"]["bound"].as_f64().unwrap();
        let published = row["row"]["published"].as_f64().unwrap();
        assert!(bound <= published, "{row}");
    }
}

#[test]
fn cache_write_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pbm");
    let p = path.to_str().unwrap();
    let w = run(&["cache", "write", "--model", "site-vl2", "--space", "5", "--path", p]);
    assert!(w.status.success());
    let r = run(&["cache", "read", "--path", p]);
    assert!(r.status.success());
    assert!(String::from_utf8_lossy(&r.stdout).contains("site-vl2 P(5) states=16"));
    std::fs::write(&path, b"garbage").unwrap();
    assert_ne!(run(&["cache", "read", "--path", p]).status.code(), Some(0));
}

#[test]
fn csv_header() {
    let out = run(&["--format", "csv", "compute", "--model", "bond-vl2", "--space", "3"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "model,space,p2,bound,lambda,states,polys,seconds");
    assert_eq!(text.lines().count(), 2);
}
