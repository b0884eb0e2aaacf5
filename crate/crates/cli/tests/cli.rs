use std::path::Path;
use std::process::{Command, Output};

use atensor_cli::report::canonical_json;
use serde_json::Value;

fn atensor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atensor")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn passing_run_writes_a_complete_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = atensor(&[
        "verify",
        "--example",
        "berger",
        "--K",
        "1",
        "--c",
        "0.8",
        "--suite",
        "bundle-ricci",
        "--suite",
        "a-condition",
        "--samples",
        "30",
        "--out",
        path.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&path);
    assert_eq!(r["all_pass"], Value::Bool(true));
    assert_eq!(r["verdict"], Value::Bool(true));
    assert_eq!(r["config"]["example"]["name"], "berger");
    assert_eq!(r["config"]["samples"], 30);
    let checks = r["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    for c in checks {
        for key in ["suite", "check", "anchor", "residual", "tolerance", "pass", "n_samples"] {
            assert!(c.get(key).is_some(), "missing {key} in {c}");
        }
        assert!(c["residual"].as_f64().unwrap() <= c["tolerance"].as_f64().unwrap());
    }
    let lambda = checks.iter().find(|c| c["check"] == "vertical-eigenvalue").expect("vertical eigenvalue check");
    assert!((lambda["value"].as_f64().unwrap() - 0.32).abs() < 1e-7);
    assert!((lambda["expected"].as_f64().unwrap() - 0.32).abs() < 1e-12);
}

#[test]
fn negative_control_fails_unless_expected_to() {
    let args =
        ["verify", "--example", "perturbed", "--eps", "0.3", "--suite", "a-condition", "--samples", "20", "--quiet"];
    let out = atensor(&args);
    assert_eq!(code(&out), 1);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["all_pass"], Value::Bool(false));
    let mut inverted = args.to_vec();
    inverted.extend(["--expect", "fail"]);
    let out = atensor(&inverted);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["all_pass"], Value::Bool(false));
    assert_eq!(report["verdict"], Value::Bool(true));
}

#[test]
fn summary_lines_go_to_stderr() {
    let out = atensor(&["verify", "--example", "sphere", "--suite", "oracle", "--samples", "10"]);
    assert_eq!(code(&out), 0);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.lines().any(|l| l.starts_with("PASS oracle/")), "{err}");
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["verify", "--example", "torus"][..],
        &["verify", "--example", "sphere", "--suite", "oneill"],
        &["verify", "--example", "berger", "--suite", "nonsense"],
        &["verify", "--example", "berger", "--tol", "a-condition"],
        &["verify", "--example", "sphere", "--eps", "0.1"],
        &["verify", "--example", "berger", "--samples", "3"],
        &["verify", "--example", "perturbed", "--eps", "0.7"],
        &["sweep", "--example", "sphere"],
        &["sweep", "--example", "berger", "--steps", "1"],
        &["list", "nothing"],
        &["frobnicate"],
    ] {
        let out = atensor(args);
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn identical_runs_are_canonically_equal() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let path = dir.path().join(name);
        let out = atensor(&[
            "verify",
            "--example",
            "berger",
            "--c",
            "0.6",
            "--samples",
            "20",
            "--seed",
            seed,
            "--suite",
            "eigenstructure",
            "--suite",
            "killing",
            "--out",
            path.to_str().unwrap(),
            "--quiet",
        ]);
        assert_eq!(code(&out), 0);
        canonical_json(&std::fs::read_to_string(path).unwrap()).unwrap()
    };
    let a = run("a.json", "11");
    let b = run("a.json", "11");
    let c = run("a.json", "12");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(!a.contains("timestamp"));
}

#[test]
fn config_file_runs_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"example": {"name": "berger", "K": 1.0, "c": 1.0, "n": 1},
            "suites": ["bundle-ricci"], "samples": 25, "seed": 3,
            "tolerances": {"bundle-ricci": 1e-9}}"#,
    )
    .unwrap();
    let out = atensor(&["verify", "--config", cfg.to_str().unwrap(), "--quiet"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["config"]["seed"], 3);
    let checks = r["checks"].as_array().unwrap();
    assert!(checks.iter().any(|c| c["check"] == "einstein-metric"));
    assert!(checks
        .iter()
        .filter(|c| c["tolerance"].as_f64().unwrap() > 0.0)
        .all(|c| c["tolerance"].as_f64() == Some(1e-9)));

    let out = atensor(&["verify", "--config", cfg.to_str().unwrap(), "--samples", "12", "--quiet"]);
    assert_eq!(code(&out), 0);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["config"]["samples"], 12);

    std::fs::write(&cfg, r#"{"example": {"name": "berger"}, "samples": "many"}"#).unwrap();
    assert_eq!(code(&atensor(&["verify", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn csv_report_has_one_row_per_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.csv");
    let out = atensor(&[
        "verify",
        "--example",
        "fubini",
        "--suite",
        "structure",
        "--samples",
        "15",
        "--format",
        "csv",
        "--out",
        path.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code(&out), 0);
    let mut rd = csv::Reader::from_path(&path).unwrap();
    let headers = rd.headers().unwrap().clone();
    for key in ["suite", "check", "residual", "tolerance", "pass"] {
        assert!(headers.iter().any(|h| h == key), "{headers:?}");
    }
    let rows: Vec<_> = rd.records().map(Result::unwrap).collect();
    assert!(!rows.is_empty());
    let pass = headers.iter().position(|h| h == "pass").unwrap();
    assert!(rows.iter().all(|r| &r[pass] == "true"));
}

#[test]
fn sweep_table_matches_the_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let out =
        atensor(&["sweep", "--example", "berger", "--K", "1", "--samples", "20", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut rd = csv::Reader::from_path(&path).unwrap();
    let headers = rd.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap_or_else(|| panic!("{name} in {headers:?}"));
    let rows: Vec<_> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 14, "13 grid rows and a footer");
    let (c, lm, lf, mm, mf) =
        (col("c"), col("lambda_measured"), col("lambda_formula"), col("mu_measured"), col("mu_formula"));
    for r in &rows[..13] {
        let v = |i: usize| r[i].parse::<f64>().unwrap();
        let cc = v(c);
        assert!((v(lf) - 0.5 * cc * cc).abs() < 1e-12);
        assert!((v(mf) - (1.0 - 0.5 * cc * cc)).abs() < 1e-12);
        assert!((v(lm) - v(lf)).abs() < 1e-7 && (v(mm) - v(mf)).abs() < 1e-7);
    }
    assert_eq!(&rows[13][0], "max_abs_discrepancy");
}

#[test]
fn listing_describes_examples_and_suites() {
    let out = atensor(&["list"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["flat", "sphere", "perturbed", "fubini", "berger", "a-condition", "geodesics", "bundle-ricci"] {
        assert!(text.contains(name), "{name} missing from listing");
    }
    let out = atensor(&["list", "killing"]);
    assert_eq!(code(&out), 0);
}
