use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn logcap(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_logcap")).args(args).current_dir(dir).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

const CIRCLE2: &str = r#"{"primitives":[{"kind":"arc","t":2.0,"theta_lo":0.0,"theta_hi":6.283185307179586}]}"#;

#[test]
fn capacity_of_circle() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", CIRCLE2);
    let out = logcap(&["capacity", "--geometry", "c.json", "--quiet"], dir.path());
    assert!(out.status.success());
    assert!(out.stderr.is_empty(), "quiet runs print nothing else");
    let c = json(&out)["capacity"].as_f64().unwrap();
    assert!((c - 2.0).abs() < 0.02);
}

#[test]
fn malformed_geometry_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.json", "{\"primitives\": [");
    let out = logcap(&["capacity", "--geometry", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"], "parse");
}

#[test]
fn invalid_geometry_and_numerical_codes() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "neg.json", r#"{"primitives":[{"kind":"arc","t":-1.0,"theta_lo":0.0,"theta_hi":1.0}]}"#);
    let out = logcap(&["capacity", "--geometry", "neg.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"], "input");
    let out = logcap(&["simulate", "--family", "deleted_radius", "--step", "0.7"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = logcap(&["nonsense"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"], "usage");
}

#[test]
fn both_routes_report_agreement() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.json", CIRCLE2);
    let out = logcap(&["capacity", "--geometry", "c.json", "--route", "both", "--quiet"], dir.path());
    let v = json(&out);
    assert_eq!(v["results"].as_array().unwrap().len(), 2);
    assert!(v["agreement_gap"].as_f64().unwrap() < 0.05);
}

#[test]
fn wiener_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let v = json(&logcap(&["wiener", "--family", "deleted_radius", "--a", "2", "--n", "1..6", "--quiet"], p));
    assert_eq!(v["verdict"], "LogRegular");
    let v = json(&logcap(&["wiener", "--family", "sparse_intervals", "--eps", "1", "--k", "2", "--quiet"], p));
    assert_eq!(v["verdict"], "LogIrregular");
    let v = json(&logcap(&["wiener", "--family", "deleted_radius", "--n", "1..3", "--quiet"], p));
    assert_eq!(v["verdict"], "Inconclusive");
}

#[test]
fn wiener_writes_terms_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = logcap(&["wiener", "--family", "level_circles", "--n", "1..5", "--out", "run", "--quiet"], dir.path());
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("run/terms.csv")).unwrap();
    assert!(csv.starts_with("n,term_h,"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn solve_gap_tables() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write(p, "d.json", r#"{"primitives":[]}"#);
    let v = json(&logcap(&["solve", "--geometry", "d.json", "--quiet"], p));
    for g in v["gap_sup"].as_array().unwrap() {
        assert!((g.as_f64().unwrap() - 1.0).abs() < 0.05);
    }
    let v = json(&logcap(&["solve", "--family", "deleted_radius", "--n", "1..6", "--quiet"], p));
    assert_eq!(v["gap_nonincreasing"], true);
    assert!(v["gap_sup"].as_array().unwrap().iter().all(|g| g.as_f64().unwrap() < 0.1));
}

#[test]
fn constant_data_gives_constant_solution() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write(p, "c.json", CIRCLE2);
    write(p, "data.json", r#"{"values":[0.25],"f_bar":0.25}"#);
    let v = json(&logcap(&["solve", "--geometry", "c.json", "--data", "data.json", "--probes", "1:0.5,3:2", "--quiet"], p));
    let s = &v["solution"];
    assert!((s["u_min"].as_f64().unwrap() - 0.25).abs() < 1e-9);
    assert!((s["u_max"].as_f64().unwrap() - 0.25).abs() < 1e-9);
}

#[test]
fn simulate_trivial_rates() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write(p, "d.json", r#"{"primitives":[]}"#);
    let v = json(&logcap(&["simulate", "--geometry", "d.json", "--n-paths", "10000", "--quiet"], p));
    assert_eq!(v["estimate"]["p_hat"], 0.0);
    write(p, "c.json", r#"{"primitives":[{"kind":"arc","t":10.0,"theta_lo":0.0,"theta_hi":6.283185307179586}]}"#);
    let v = json(&logcap(&["simulate", "--geometry", "c.json", "--start", "5:1", "--first-hit", "--quiet"], p));
    assert_eq!(v["estimate"]["p_hat"], 1.0);
}

#[test]
fn family_emits_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let out = logcap(&["family", "deleted_radius", "--n", "1..3", "--quiet"], dir.path());
    let v = json(&out);
    assert_eq!(v["primitives"][0]["kind"], "radial_segment");
    assert_eq!(v["a"], 2.0);
}

/// Every output file of a run, keyed by name.
fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn persisted_configs_replay_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write(p, "c.json", CIRCLE2);
    let runs: [&[&str]; 4] = [
        &["capacity", "--geometry", "c.json", "--route", "both"],
        &["wiener", "--family", "sparse_intervals", "--n", "2..6"],
        &["solve", "--family", "deleted_radius", "--n", "1..4", "--truncations", "12,16,20"],
        &["simulate", "--family", "deleted_radius", "--n", "1..4", "--n-paths", "300", "--seed", "17", "--dump-paths", "2"],
    ];
    for (i, args) in runs.iter().enumerate() {
        let first = format!("first{i}");
        let again = format!("again{i}");
        let mut a: Vec<&str> = args.to_vec();
        a.extend(["--out", &first, "--quiet"]);
        assert!(logcap(&a, p).status.success(), "{args:?}");
        let cfg = format!("{first}/config.json");
        let out = logcap(&["--config", &cfg, "--out", &again, "--quiet"], p);
        assert!(out.status.success());
        assert_eq!(outputs(&p.join(&first)), outputs(&p.join(&again)), "{args:?}");
    }
}
