use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn afdlu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_afdlu")).args(args).output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("afdlu-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn gsd_of_ty_z3_is_fifteen() {
    let out = afdlu(&["gsd", "--category", "ty_z3", "--expect", "15"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["results"]["dimension"], 15);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["pass"], true);
}

#[test]
fn wrong_expectation_fails_with_exit_one() {
    let out = afdlu(&["gsd", "--category", "vec_z3", "--expect", "4"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["pass"], false);
}

#[test]
fn bad_input_exit_codes() {
    assert_eq!(afdlu(&["gsd"]).status.code(), Some(2));
    assert_eq!(afdlu(&["gsd", "--category", "no_such_category"]).status.code(), Some(2));
    assert_eq!(afdlu(&["oneform", "--roundtrip", "--group", "q7", "--region", "0:0"]).status.code(), Some(2));
}

#[test]
fn prepare_then_verify() {
    let state = scratch("ising7.json");
    let transcript = scratch("ising7.transcript.json");
    let out = afdlu(&[
        "prepare",
        "--category",
        "ising",
        "--seed",
        "7",
        "--dump",
        state.to_str().unwrap(),
        "--transcript",
        transcript.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = afdlu(&["verify", "--state", state.to_str().unwrap(), "--category", "ising"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(&out);
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    // Verifying against the wrong category is an input error.
    let out = afdlu(&["verify", "--state", state.to_str().unwrap(), "--category", "ty_z3"]);
    assert_eq!(out.status.code(), Some(2));
    let t: Value = serde_json::from_str(&std::fs::read_to_string(&transcript).unwrap()).unwrap();
    assert_eq!(t["seed"], 7);
}

#[test]
fn thread_count_does_not_change_reports() {
    let runs: [&[&str]; 3] = [
        &["prepare", "--category", "ty_z3", "--seed", "3"],
        &["protocol", "cyclic", "--theory", "zty3", "--trials", "3000", "--seed", "5"],
        &["oneform", "--roundtrip", "--group", "z3", "--region", "1:1", "--seed", "2"],
    ];
    for args in runs {
        let mut outs = Vec::new();
        for t in ["1", "4"] {
            let mut full = vec!["--deterministic", "--threads", t];
            full.extend_from_slice(args);
            let out = afdlu(&full);
            assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
            outs.push(out.stdout);
        }
        assert_eq!(outs[0], outs[1], "{args:?}");
        assert!(!String::from_utf8_lossy(&outs[0]).contains("timings_ms"));
    }
}

#[test]
fn string_and_tube_commands() {
    let out = afdlu(&["string-op", "--category", "ty_z3", "--anyon", "phi", "--path", "0:0,1:0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let out = afdlu(&["tube", "--idempotent", "phi", "--check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let out = afdlu(&["string-op", "--category", "vec_z3", "--anyon", "em*", "--path", "0:0,1:0,1:1", "--lx", "3", "--ly", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn protocol_writes_csv() {
    let csv = scratch("curve.csv");
    let out =
        afdlu(&["protocol", "cyclic", "--theory", "zty3", "--trials", "2000", "--p", "0.6667", "--csv", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("depth,success,expected,sigma"));
    assert_eq!(text.lines().count(), 9);
    let out = afdlu(&["protocol", "nilpotent", "--theory", "doubled_ising", "--trials", "200"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}
