use std::fs;
use std::path::Path;

use serde_json::Value;

fn run(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut argv = vec!["qcorr"];
    argv.extend_from_slice(args);
    let code = qcorr::cli::run(argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn run_json(args: &[&str]) -> Value {
    let mut full = args.to_vec();
    full.push("--json");
    let (code, out) = run(&full);
    assert_eq!(code, 0, "{args:?}");
    serde_json::from_str(&out).unwrap()
}

fn state_file(dir: &Path, name: &str, diag: [f64; 2]) -> String {
    let path = dir.join(name);
    let body = format!(
        r#"{{"format":"qcorr/1","rows":2,"cols":2,"data":[[{:?},0],[0,0],[0,0],[{:?},0]]}}"#,
        diag[0], diag[1]
    );
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn csv_file(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn schmidt_of_epr() {
    let dir = tempfile::tempdir().unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let epr = state_file(dir.path(), "epr.json", [h, h]);
    let v = run_json(&["schmidt", "--state", &epr]);
    assert_eq!(v["r"], 2);
    for c in v["coeffs"].as_array().unwrap() {
        assert!((c.as_f64().unwrap() - 0.5).abs() < 1e-12);
    }
}

#[test]
fn qeps_of_skewed_state() {
    let dir = tempfile::tempdir().unwrap();
    let s = state_file(dir.path(), "s.json", [0.9f64.sqrt(), 0.1f64.sqrt()]);
    let v = run_json(&["qeps", "--state", &s, "--eps", "0.06"]);
    assert_eq!(v["q_eps"], 0);
    assert_eq!(v["config"]["eps"], 0.06);
}

#[test]
fn psdrank_of_half_identity() {
    let dir = tempfile::tempdir().unwrap();
    let p = csv_file(dir.path(), "halfI2.csv", "0.5,0\n0,0.5\n");
    let v = run_json(&["psdrank", "--dist", &p]);
    assert_eq!(
        (v["lower"].clone(), v["upper"].clone()),
        (2.into(), 2.into())
    );
    assert_eq!(v["status"], "certified");
    assert_eq!(v["Q"], 1);
    assert_eq!(v["config"]["seed"], 0);
}

#[test]
fn json_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = csv_file(dir.path(), "third.csv", "1,0,0\n0,1,0\n0,0,1\n");
    let args = [
        "psdrank",
        "--dist",
        &p,
        "--renormalize",
        "--seed",
        "7",
        "--starts",
        "4",
        "--json",
    ];
    let (code, first) = run(&args);
    assert_eq!(code, 0);
    assert_eq!(run(&args).1, first);
}

#[test]
fn classical_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = csv_file(dir.path(), "halfI2.csv", "0.5,0\n0,0.5\n");
    let out = dir.path().join("synth");
    let out = out.to_str().unwrap();
    let v = run_json(&["synth", "--dist", &p, "--out", out]);
    assert_eq!(v["seed_size_qubits"], 1);

    let manifest = v["protocol"].as_str().unwrap().to_string();
    let check = run_json(&["verify", "--protocol", &manifest]);
    assert_eq!(check["pass"], true);

    let pur = format!("{out}/purification.json");
    let factors = format!("{out}/general.json");
    run_json(&["extract", "--purification", &pur, "--out", &factors]);
    let rho = run_json(&["reconstruct", "--factorization", &factors]);
    assert_eq!(rho["classical"], true);
    let diag: Vec<f64> = rho["diagonal"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    for (got, want) in diag.iter().zip([0.5, 0.0, 0.0, 0.5]) {
        assert!((got - want).abs() < 1e-8);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["frobnicate"]).0, 2);
    let bad = csv_file(dir.path(), "bad.csv", "0.5,0.6\n0.1,-0.2\n");
    assert_eq!(run(&["psdrank", "--dist", &bad]).0, 2);
    let unnormalized = csv_file(dir.path(), "u.csv", "1,1\n1,1\n");
    assert_eq!(run(&["psdrank", "--dist", &unnormalized]).0, 2);
    assert_eq!(
        run(&["psdrank", "--dist", &unnormalized, "--renormalize"]).0,
        0
    );
    assert_eq!(run(&["schmidt", "--state", "/nonexistent/state.json"]).0, 2);
}
