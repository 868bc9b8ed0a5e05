use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coronary-cip"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn simulate(state: &str, dir: &Path) {
    let out = cli(&["simulate", "--state", state, "--stride", "20", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(cli(&["simulate"]).status.code(), Some(2));
    assert_eq!(cli(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(cli(&["params", "--state", "exercise"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_1_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing");
    let out = cli(&["eval", "--model", missing.to_str().unwrap(), "--dataset", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].is_string() && err["kind"].is_string());
}

#[test]
fn params_prints_parameters_and_tree() {
    let out = cli(&["params", "--state", "hyperemia"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 1);
    assert_eq!(v[0]["state"], "HYPEREMIA");
    let both: serde_json::Value = serde_json::from_slice(&cli(&["params"]).stdout).unwrap();
    assert_eq!(both.as_array().unwrap().len(), 2);
    let tree: serde_json::Value = serde_json::from_slice(&cli(&["params", "--tree"]).stdout).unwrap();
    assert!(tree.to_string().contains("lad"));
}

#[test]
fn simulate_then_compute_indices_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let (rest, hyper) = (dir.path().join("rest"), dir.path().join("hyper"));
    simulate("rest", &rest);
    simulate("hyperemia", &hyper);
    for f in ["summary.json", "series.csv", "series.bin", "distal.csv", "cip.csv", "manifest.json"] {
        assert!(hyper.join(f).is_file(), "{f}");
    }
    let out = cli(&["compute-indices", "--rest", rest.to_str().unwrap(), "--hyper", hyper.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let cfr = v["indices"]["cfr"].as_f64().unwrap();
    let imr = v["indices"]["imr"].as_f64().unwrap();
    assert!(cfr > 1.0 && imr > 0.0, "cfr {cfr}, imr {imr}");

    let svg = dir.path().join("cips.svg");
    let rest_cip = rest.join("cip.csv");
    let hyper_cip = hyper.join("cip.csv");
    let out = cli(&[
        "plot",
        "--cip",
        rest_cip.to_str().unwrap(),
        hyper_cip.to_str().unwrap(),
        "--out",
        svg.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(svg).unwrap();
    assert!(text.starts_with("<svg") && text.matches("<polyline").count() >= 2);
}
