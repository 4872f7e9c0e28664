use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mmlasso(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmlasso"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_toy(dir: &Path) -> String {
    let mut text = String::from("x1,x2,y\n");
    for i in 0..40 {
        let x1 = i as f64 * 0.25;
        let x2 = ((i * 7) % 11) as f64 - 5.0;
        let noise = (((i * 13) % 17) as f64 - 8.0) * 0.01;
        text.push_str(&format!("{x1},{x2},{}\n", 1.0 + 2.0 * x1 + noise));
    }
    let path = dir.join("toy.csv");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fit_recovers_toy_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_toy(dir.path());
    let out = dir.path().join("out");
    let o = mmlasso(&[
        "fit",
        "--input",
        &input,
        "--estimator",
        "mmlasso",
        "--lambda",
        "0",
        "--gamma",
        "0",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit = read_json(&out.join("fit.json"));
    assert_eq!(fit["estimator"], "mmlasso");
    let slope = fit["coefficients"]["x1"].as_f64().unwrap();
    let x2 = fit["coefficients"]["x2"].as_f64().unwrap();
    let intercept = fit["intercept"].as_f64().unwrap();
    assert!((slope - 2.0).abs() < 0.02, "slope {slope}");
    assert!(x2.abs() < 0.02, "x2 {x2}");
    assert!((intercept - 1.0).abs() < 0.1, "intercept {intercept}");
    assert!(out.join("coefficients.csv").exists());
}

#[test]
fn omitted_lambda_is_cross_validated() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_toy(dir.path());
    let out = dir.path().join("out");
    let o = mmlasso(&[
        "fit",
        "--input",
        &input,
        "--estimator",
        "mmlasso",
        "--seed",
        "3",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit = read_json(&out.join("fit.json"));
    let cv = &fit["cv"]["lambda"];
    assert!(cv["candidates"].as_array().is_some_and(|c| c.len() > 1));
    assert_eq!(cv["selected"], fit["penalties"]["lambda"]);
}

#[test]
fn missing_input_exits_2() {
    let o = mmlasso(&["fit", "--input", "/nonexistent/data.csv"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("input file not found"), "{err}");
}

#[test]
fn malformed_cell_reports_line_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "a,b,y\n1,2,3\n4,oops,6\n").unwrap();
    let o = mmlasso(&["fit", "--input", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(":3:") && err.contains("'b'") && err.contains("oops"), "{err}");
}

#[test]
fn unknown_estimator_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_toy(dir.path());
    let o = mmlasso(&["fit", "--input", &input, "--estimator", "lars"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn constants_prints_tuning_values() {
    let o = mmlasso(&["constants"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["c0"].as_f64().unwrap() - 1.5476).abs() < 1e-3);
    assert!((v["c1"].as_f64().unwrap() - 3.4437).abs() < 1e-3);
    assert!((v["efficiency"].as_f64().unwrap() - 0.85).abs() < 1e-6);

    let o = mmlasso(&["constants", "--errors", "t1"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["efficiency"].is_null());
    assert!(v["oracle_variance"].as_f64().unwrap().is_finite());
}

fn simulate(out: &Path, jobs: &str) -> Output {
    mmlasso(&[
        "simulate",
        "--scenario",
        "1",
        "--errors",
        "t3",
        "--M",
        "2",
        "--y0-grid",
        "0,5",
        "--seed",
        "11",
        "--jobs",
        jobs,
        "--allow-nonconverged",
        "--output",
        out.to_str().unwrap(),
    ])
}

#[test]
fn simulate_is_byte_identical_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let oa = simulate(&a, "1");
    let ob = simulate(&b, "2");
    assert!(oa.status.success(), "{}", String::from_utf8_lossy(&oa.stderr));
    assert!(ob.status.success());
    // Only the reported output paths may differ.
    let table = |o: &Output| -> String {
        String::from_utf8_lossy(&o.stdout)
            .lines()
            .filter(|l| !l.starts_with("wrote "))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(table(&oa), table(&ob));
    for name in ["report.json", "summary.csv", "curve.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn simulate_rejects_bad_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = mmlasso(&["simulate", "--scenario", "9", "--output", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
