use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dissipon"))
        .arg("--output-dir")
        .arg(out)
        .args(args)
        .env_remove("DISSIPON_SEED")
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Problem file with a cheap pure-dephasing bath and the given overrides merged in.
fn small_problem(dir: &Path, patch: Value) -> PathBuf {
    let mut cfg = read_json(&fixture("dephasing.json"));
    cfg["truncation"] = serde_json::json!({ "heom_depth": 4, "fock_cap": 4, "hops_depth": 3 });
    cfg["time"] = serde_json::json!({ "t_end": 1.0, "steps": 10 });
    if let (Some(obj), Some(p)) = (cfg.as_object_mut(), patch.as_object()) {
        for (k, v) in p {
            obj.insert(k.clone(), v.clone());
        }
    }
    let path = dir.join("problem.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn certify_reports_physical_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["certify", fixture("two_term_bcf.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = read_json(&dir.path().join("certify.json"));
    assert_eq!(report["is_physical"], Value::Bool(true));
    let hash = report["provenance"]["content_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(report["provenance"]["config"]["bcf"]["lambdas"].is_array());
    let csv = fs::read_to_string(dir.path().join("spectral_density.csv")).unwrap();
    assert!(csv.starts_with("# command: certify"));
    assert!(csv.contains("omega,J"));
}

#[test]
fn compare_heom_and_lindblad_on_spin_boson() {
    let dir = tempfile::tempdir().unwrap();
    let problem = fixture("spin_boson.json");
    let o = run(
        dir.path(),
        &["compare", problem.to_str().unwrap(), "--engines", "heom,lindblad", "--threshold", "1e-3"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let verdict = read_json(&dir.path().join("compare.json"));
    assert_eq!(verdict["pass"], Value::Bool(true));
    assert!(verdict["max_trace_distance"].as_f64().unwrap() < 1e-3);
    let csv = fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    assert!(csv.contains("t,heom_vs_lindblad"));
    // 3 provenance lines, a header and 51 output times.
    assert_eq!(csv.lines().count(), 3 + 1 + 51);
}

#[test]
fn compare_exits_3_when_threshold_missed() {
    let dir = tempfile::tempdir().unwrap();
    let problem = small_problem(dir.path(), serde_json::json!({}));
    let o = run(dir.path(), &["compare", problem.to_str().unwrap(), "--engines", "heom,lindblad", "--threshold", "1e-14"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert_eq!(read_json(&dir.path().join("compare.json"))["pass"], Value::Bool(false));
}

#[test]
fn hops_with_unphysical_bath_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bcf = read_json(&fixture("unphysical_bcf.json"));
    let problem = small_problem(dir.path(), serde_json::json!({ "bath": { "bcf": bcf } }));
    let o = run(dir.path(), &["simulate", "hops", problem.to_str().unwrap(), "--trajectories", "4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("NotPhysical"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let model_and_bcf = serde_json::json!({ "bath": {
        "bcf": { "lambdas": [[1.0, 0.0]], "amplitudes": [[1.0, 0.0]] },
        "parametrization": { "lambdas": [[1.0, 0.0]], "residues": [[1.0, 0.0]] }
    }});
    let problem = small_problem(dir.path(), model_and_bcf);
    let o = run(dir.path(), &["simulate", "heom", problem.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("exactly one"));

    let o = run(dir.path(), &["simulate", "heom", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let problem = small_problem(dir.path(), serde_json::json!({ "hops": { "dt": 0.03 } }));
    let o = run(dir.path(), &["simulate", "hops", problem.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn fit_csv_samples() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("tau,re,im\n");
    for i in 0..200 {
        let t = 5.0 * i as f64 / 199.0;
        // 0.5 exp(-(1 + 2i) t)
        let (re, im) = (0.5 * (-t).exp() * (2.0 * t).cos(), -0.5 * (-t).exp() * (2.0 * t).sin());
        csv.push_str(&format!("{t},{re},{im}\n"));
    }
    let input = dir.path().join("samples.csv");
    fs::write(&input, csv).unwrap();
    let o = run(dir.path(), &["fit", input.to_str().unwrap(), "--terms", "1", "--restarts", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fit = read_json(&dir.path().join("fit_physical.json"));
    let g = &fit["amplitudes"][0];
    assert!((g[0].as_f64().unwrap() - 0.5).abs() < 1e-6);
    assert_eq!(fit["positivity"]["is_physical"], Value::Bool(true));
    assert!(dir.path().join("fit_direct.json").exists());
    assert!(dir.path().join("fit_comparison.json").exists());

    // The fit output is a valid bath file for the other commands.
    let o = run(dir.path(), &["certify", dir.path().join("fit_physical.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = run(dir.path(), &["fit", input.to_str().unwrap(), "--terms", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn build_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["build", fixture("two_term_bcf.json").to_str().unwrap(), "--verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let model = read_json(&dir.path().join("model.json"));
    assert!(model["Gamma"].is_array() && model["V"].is_array() && model["h"].is_array());
    assert_eq!(read_json(&dir.path().join("verification.json"))["all_pass"], Value::Bool(true));

    // A built model is an accepted Lindblad bath.
    let problem = small_problem(dir.path(), serde_json::json!({ "bath": { "model": {
        "h": model["h"], "Gamma": model["Gamma"], "g": model["g"]
    }}}));
    let o = run(dir.path(), &["simulate", "lindblad", problem.to_str().unwrap(), "--fock-cap", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = run(dir.path(), &["simulate", "heom", problem.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn noise_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["noise-check", fixture("two_term_bcf.json").to_str().unwrap(), "--paths", "20000", "--dt", "0.05", "--t-end", "2"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = read_json(&dir.path().join("noise_check.json"));
    assert_eq!(report["statistics"]["probes"].as_array().unwrap().len(), 25);
}

#[test]
fn rerun_from_embedded_config_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let problem = small_problem(dir.path(), serde_json::json!({}));
    let first = dir.path().join("first");
    let o = run(&first, &["simulate", "hops", problem.to_str().unwrap(), "--trajectories", "16", "--seed", "9", "--rk4-step", "0.01"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let diag = read_json(&first.join("hops_diagnostics.json"));
    let resolved = dir.path().join("resolved.json");
    fs::write(&resolved, diag["provenance"]["config"].to_string()).unwrap();
    let second = dir.path().join("second");
    let o = run(&second, &["simulate", "hops", resolved.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(first.join("hops.csv")).unwrap(), fs::read(second.join("hops.csv")).unwrap());

    for engine in ["heom", "lindblad"] {
        let a = dir.path().join(format!("{engine}-a"));
        let b = dir.path().join(format!("{engine}-b"));
        run(&a, &["simulate", engine, problem.to_str().unwrap(), "--rk4-step", "0.01"]);
        let cfg = read_json(&a.join(format!("{engine}_diagnostics.json")))["provenance"]["config"].clone();
        let path = dir.path().join(format!("{engine}-resolved.json"));
        fs::write(&path, cfg.to_string()).unwrap();
        let o = run(&b, &["simulate", engine, path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let name = format!("{engine}.csv");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
    }
}

#[test]
fn seed_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let problem = small_problem(dir.path(), serde_json::json!({}));
    let o = Command::new(env!("CARGO_BIN_EXE_dissipon"))
        .arg("--output-dir")
        .arg(dir.path())
        .args(["simulate", "hops", problem.to_str().unwrap(), "--trajectories", "4"])
        .env("DISSIPON_SEED", "1234")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let diag = read_json(&dir.path().join("hops_diagnostics.json"));
    assert_eq!(diag["provenance"]["config"]["hops"]["seed"], Value::from(1234));
}
