use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ercce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ercce")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn column(csv: &str, k: usize) -> Vec<f64> {
    csv.lines().skip(1).map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

fn small_cce(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["cce", "--radius-nm", "6", "--out-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    ercce(&args)
}

#[test]
fn help_lists_defaults() {
    let out = ercce(&["cce", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success());
    for needle in ["[default: 67]", "[default: 46.5]", "[default: 0.145]", "[default: 11]", "[default: 1.2]"] {
        assert!(text.contains(needle), "missing {needle} in\n{text}");
    }
}

#[test]
fn empty_bath_gives_flat_coherence() {
    let dir = tempfile::tempdir().unwrap();
    json(&small_cce(dir.path(), &["--abundance", "0"]));
    let csv = fs::read_to_string(dir.path().join("coherence.csv")).unwrap();
    let l = column(&csv, 1);
    assert!(!l.is_empty() && l.iter().all(|v| (v - 1.0).abs() < 1e-12), "{l:?}");
}

#[test]
fn small_bath_decays_and_its_curve_refits() {
    let dir = tempfile::tempdir().unwrap();
    let report = json(&small_cce(dir.path(), &[]));
    let t2 = report["result"]["fit"]["t2_s"].as_f64().expect("fit present");
    assert!((20e-3..45e-3).contains(&t2), "{t2}");
    let curve = dir.path().join("coherence.csv");
    let refit = json(&ercce(&["fit", curve.to_str().unwrap(), "--x-col", "two_tau_s", "--y-col", "L_mean"]));
    let t2_refit = refit["result"]["components"][0]["t2_s"].as_f64().unwrap();
    assert!((t2_refit / t2 - 1.0).abs() < 1e-6, "{t2_refit} vs {t2}");

    let frozen = json(&ercce(&[
        "fit", curve.to_str().unwrap(), "--x-col", "two_tau_s", "--y-col", "L_mean", "--freeze", "T2n=27.2ms,xn=2.74", "--components", "2",
    ]));
    let c = &frozen["result"]["components"];
    assert_eq!(c[0]["t2_s"].as_f64().unwrap(), 27.2e-3);
    assert_eq!(c[0]["t2_fixed"], Value::Bool(true));
}

#[test]
fn json_report_reproduces_the_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    json(&small_cce(a.path(), &["--seed", "5", "--n-tau", "30"]));
    let report = a.path().join("cce.json");
    json(&ercce(&["cce", "--config", report.to_str().unwrap(), "--out-dir", b.path().to_str().unwrap()]));
    let first = fs::read(a.path().join("coherence.csv")).unwrap();
    let second = fs::read(b.path().join("coherence.csv")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn toml_values_yield_to_explicit_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[cce]\nradius_nm = 5.0\nseed = 3\nn_tau = 20\n").unwrap();
    let out = json(&ercce(&["cce", "--config", cfg.to_str().unwrap(), "--seed", "4"]));
    assert_eq!(out["config"]["radius_nm"].as_f64(), Some(5.0));
    assert_eq!(out["config"]["seed"].as_u64(), Some(4));
    assert_eq!(out["config"]["n_tau"].as_u64(), Some(20));

    fs::write(&cfg, "[cce]\nradius = 5.0\n").unwrap();
    let bad = ercce(&["cce", "--config", cfg.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown field"));
}

#[test]
fn unreadable_inputs_are_user_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(ercce(&["fit", empty.to_str().unwrap()]).status.code(), Some(1));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "two_tau_s,A\n0,1\n0.01,oops\n").unwrap();
    let out = ercce(&["fit", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("oops"), "{}", String::from_utf8_lossy(&out.stderr));

    assert_eq!(ercce(&["fit", dir.path().join("missing.csv").to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn degenerate_stark_fit_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("stark.csv");
    fs::write(&data, "phi_deg,Gamma_MHz\n31,1.0\n121,1.0\n31,1.01\n211,0.99\n").unwrap();
    assert_eq!(ercce(&["stark", "--fit", data.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn id_defaults_give_four_hundred_ms() {
    let out = json(&ercce(&["id"]));
    let t = out["result"]["t2_id_s"].as_f64().unwrap();
    assert!((t - 0.4).abs() < 0.04, "{t}");
    let bw = json(&ercce(&["id", "--gamma-MHz", "10", "--bw-kHz", "250"]));
    assert!((bw["result"]["t2_id_s"].as_f64().unwrap() - 0.4).abs() < 0.04);
}

#[test]
fn t1_alias_runs_the_relaxation_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = json(&ercce(&["t1", "--n-beta", "3", "--beta-min", "1e7", "--beta-max", "1e9", "--out-dir", dir.path().to_str().unwrap()]));
    assert_eq!(out["command"], Value::String("t1sim".into()));
    let csv = fs::read_to_string(dir.path().join("t1_vs_beta.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(dir.path().join("coupling_hist.csv").exists());
}

#[test]
fn eseem_writes_trace_and_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    json(&ercce(&["eseem", "--out-dir", dir.path().to_str().unwrap()]));
    let trace = fs::read_to_string(dir.path().join("eseem_trace.csv")).unwrap();
    let v = column(&trace, 1);
    assert_eq!(v.len(), 301);
    assert!((v[0] - 1.0).abs() < 1e-12);
    let fft = fs::read_to_string(dir.path().join("eseem_fft.csv")).unwrap();
    let (f, filtered) = (column(&fft, 0), column(&fft, 2));
    assert!(f.iter().zip(&filtered).filter(|(f, _)| **f > 125.0).all(|(_, a)| a.abs() < 1e-12));
}

#[test]
fn analytic_commands_emit_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for args in [vec!["stark"], vec!["reflect"], vec!["gens"], vec!["t1temp"], vec!["anisotropy"], vec!["bathgen", "--radius-nm", "3"]] {
        let mut full = args.clone();
        full.extend(["--out-dir", d]);
        let out = json(&ercce(&full));
        assert_eq!(out["schema_version"].as_u64(), Some(1), "{args:?}");
    }
    assert!(dir.path().join("reflection.csv").exists());
    assert!(dir.path().join("bath.csv").exists());
}
