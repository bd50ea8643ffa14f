use std::fs;
use std::path::Path;
use std::process::Command;

use awe::cli::{cmd_check, cmd_run, CheckArgs, RunArgs, Summary};
use awe::sim::trace::{read_jsonl, write_jsonl, Payload, Ret};
use awe::verify::verify_trace;

const SCENARIO: &str = r#"{
  "n": 5, "t": 1, "k": 2, "m": 3, "ell": 32,
  "schedule": {"policy": "random", "seed": 100, "fairness": 150},
  "adversary": {"nodes": [{"id": 2, "strategy": "corrupt-fragment"}], "client_crashes": {"2": 120}},
  "workload": {"mix": 0.5, "ops": 8}
}"#;

fn write_scenario(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run_args(scenario: std::path::PathBuf, out: std::path::PathBuf, runs: u64) -> RunArgs {
    RunArgs { scenario, seed: None, runs, out, exhaustive: false, fairness_bound: None }
}

fn call_run(args: &RunArgs) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cmd_run(args, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn call_check(trace: &Path) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cmd_check(&CheckArgs { trace: trace.to_path_buf() }, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn ten_seeds_ten_traces_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.json", SCENARIO);
    let out = dir.path().join("out");
    let (code, table, err) = call_run(&run_args(sc, out.clone(), 10));
    assert_eq!(code, 0, "{table}{err}");
    for seed in 100..110 {
        assert!(out.join(format!("trace-{seed}.jsonl")).exists());
    }
    let summary: Summary = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary.passed);
    assert_eq!(summary.runs.len(), 10);
    assert!(table.contains("PASS"));
}

#[test]
fn run_then_check_matches_inline_check() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.json", SCENARIO);
    let out = dir.path().join("out");
    assert_eq!(call_run(&run_args(sc.clone(), out.clone(), 3)).0, 0);
    let scenario = awe::sim::Scenario::from_json(SCENARIO).unwrap();
    for seed in 100..103 {
        let path = out.join(format!("trace-{seed}.jsonl"));
        let (code, json, _) = call_check(&path);
        assert_eq!(code, 0);
        let inline = verify_trace(&awe::sim::run(&scenario.with_seed(seed)).unwrap().trace).unwrap();
        let stored: awe::verify::TraceReport = serde_json::from_str(&json).unwrap();
        assert_eq!(stored, inline);
    }
}

#[test]
fn resilience_boundary_reports_write_starved() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{"n": 3, "t": 1, "k": 2, "m": 1, "ell": 8, "allow_unsafe": true,
        "adversary": {"nodes": [{"id": 0, "strategy": "silent"}]},
        "workload": {"mix": 0.0, "ops": 2}}"#;
    let sc = write_scenario(dir.path(), "s.json", body);
    let (code, table, _) = call_run(&run_args(sc, dir.path().join("out"), 2));
    assert_ne!(code, 0);
    assert!(table.contains("write starved"), "{table}");
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.json", &SCENARIO.replace(r#""n": 5"#, r#""n": 3"#));
    let (code, _, err) = call_run(&run_args(sc, dir.path().join("out"), 1));
    assert_eq!(code, 2);
    assert!(err.contains("`n`"), "{err}");
    let sc = write_scenario(dir.path(), "bad.json", "{ not json");
    assert_eq!(call_run(&run_args(sc, dir.path().join("out"), 1)).0, 2);
}

#[test]
fn mutated_stale_read_fails_check_with_pair() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.json", SCENARIO);
    let out = dir.path().join("out");
    assert_eq!(call_run(&run_args(sc, out.clone(), 1)).0, 0);
    let path = out.join("trace-100.jsonl");
    let mut trace = read_jsonl(fs::read_to_string(&path).unwrap().as_bytes()).unwrap();
    // the last read to complete returns the very first value written
    let first = trace
        .iter()
        .find_map(|e| match &e.payload {
            Payload::Invoke { call: awe::sim::trace::Call::Write { value }, .. } => Some(value.clone()),
            _ => None,
        })
        .unwrap();
    let ev = trace
        .iter_mut()
        .rev()
        .find(|e| matches!(&e.payload, Payload::Respond { ret: Ret::ReadResp { value: Some(v), .. }, .. } if *v != first))
        .unwrap();
    if let Payload::Respond { ret: Ret::ReadResp { value, .. }, .. } = &mut ev.payload {
        *value = Some(first);
    }
    let bad = dir.path().join("bad.jsonl");
    let mut buf = Vec::new();
    write_jsonl(&trace, &mut buf).unwrap();
    fs::write(&bad, buf).unwrap();
    let (code, json, err) = call_check(&bad);
    assert_eq!(code, 1);
    assert!(json.contains(r#""pair""#), "{json}");
    assert!(err.contains("not linearizable"), "{err}");
}

#[test]
fn empty_trace_is_vacuously_fine() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.jsonl");
    fs::write(&p, "").unwrap();
    assert_eq!(call_check(&p).0, 0);
    fs::write(&p, "not json\n").unwrap();
    let (code, _, err) = call_check(&p);
    assert_eq!(code, 2);
    assert!(err.contains("line 1"), "{err}");
}

#[test]
fn exhaustive_flag() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{"n": 3, "t": 1, "k": 1, "m": 2, "ell": 2,
        "schedule": {"depth": 10},
        "adversary": {"nodes": [{"id": 1, "strategy": "wrong-timestamp"}]},
        "workload": {"scripts": [[{"write": "0a0b"}], ["read"]]}}"#;
    let sc = write_scenario(dir.path(), "s.json", body);
    let mut args = run_args(sc.clone(), dir.path().join("out"), 1);
    args.exhaustive = true;
    let (code, table, err) = call_run(&args);
    assert_eq!(code, 0, "{table}{err}");
    assert!(table.contains("exhaustive depth 10"), "{table}");
    // too large for exhaustive exploration
    let big = write_scenario(dir.path(), "big.json", SCENARIO);
    let mut args = run_args(big, dir.path().join("out"), 1);
    args.exhaustive = true;
    assert_eq!(call_run(&args).0, 2);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.json", SCENARIO);
    let out = dir.path().join("out");
    let bin = env!("CARGO_BIN_EXE_awe");
    let status = Command::new(bin)
        .args(["run", "--scenario"])
        .arg(&sc)
        .args(["--seed", "7", "--runs", "2", "--fairness-bound", "50", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let status = Command::new(bin).args(["check", "--trace"]).arg(out.join("trace-8.jsonl")).output().unwrap();
    assert!(status.status.success());
    let status = Command::new(bin).args(["run", "--scenario", "/nonexistent.json", "--out"]).arg(&out).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
}
