//! End-to-end checks of the `circfit` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn circfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_circfit")).args(args).output().expect("spawn circfit")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn kasa_fit_writes_schema_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "p.csv", "x,y\n1,0\n0,1\n-1,0\n0,-1\n");
    let out = dir.path().join("fit.json");
    let res = circfit(&["fit", "--method", "kasa", "--input", &input, "--output", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let j = json(&out);
    assert_eq!(j["method"], "kasa");
    assert_eq!(j["model"]["kind"], "circle");
    assert!((j["model"]["R"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(j["model"]["a"].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(j["pratt"].as_array().unwrap().len(), 4);
    assert_eq!(j["degeneracy"], "none");

    let m = json(&dir.path().join("fit.json.manifest.json"));
    assert_eq!(m["invocation"]["command"], "fit");
    assert_eq!(m["outputs"][0], out.to_str().unwrap());
}

#[test]
fn fit_to_stdout_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "p.csv", "x,y\n3,0\n0,3\n-3,0\n");
    let res = circfit(&["fit", "--method", "pratt", "--input", &input]);
    assert!(res.status.success());
    let j: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert!((j["model"]["R"].as_f64().unwrap() - 3.0).abs() < 1e-12);
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn collinear_geometric_fit_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "p.csv", "x,y\n0,2\n1,2\n2,2\n5,2\n");
    let res = circfit(&["fit", "--method", "geom", "--input", &input]);
    assert!(res.status.success());
    let j: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(j["model"]["kind"], "line");
    assert_eq!(j["degeneracy"], "collinear_input");
    assert!(j["objective"].as_f64().unwrap() < 1e-24);
}

#[test]
fn collinear_kasa_is_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "p.csv", "x,y\n0,0\n1,1\n2,2\n");
    let res = circfit(&["fit", "--method", "kasa", "--input", &input]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn bad_input_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit.json");
    for (name, body) in [
        ("nonnumeric.csv", "x,y\n1,0\nfoo,1\n-1,0\n"),
        ("header.csv", "u,v\n1,0\n0,1\n-1,0\n"),
        ("short.csv", "x,y\n1,0\n0,1\n"),
    ] {
        let input = write(dir.path(), name, body);
        let res = circfit(&["fit", "--method", "geom", "--input", &input, "--output", out.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(2), "{name}");
        assert!(!out.exists(), "{name}");
    }
    let missing = dir.path().join("missing.csv");
    let res = circfit(&["fit", "--method", "geom", "--input", missing.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "p.csv", "x,y\n1,0\n0,1\n-1,0\n");
    // a regular file cannot serve as a parent directory
    let blocker = write(dir.path(), "blocker", "");
    let out = format!("{blocker}/fit.json");
    let res = circfit(&["fit", "--method", "kasa", "--input", &input, "--output", &out]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn generate_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let params = r#"{"truth":{"a_star":0,"b_star":0,"R_star":1,"angles":{"kind":"uniform"}},"n":50,"noise":{"kind":"isotropic_gaussian","sigma":0.1}}"#;
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let res = circfit(&["generate", "--model", "structural", "--params", params, "--seed", seed, "--output", out.to_str().unwrap()]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        fs::read_to_string(out).unwrap()
    };
    let (a, b, c) = (run("a.csv", "7"), run("b.csv", "7"), run("c.csv", "8"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 51);
    assert!(a.starts_with("x,y\n"));
}

#[test]
fn generated_theorem_points_stay_in_regions() {
    let dir = tempfile::tempdir().unwrap();
    let h = 5e-3;
    let out = dir.path().join("t.csv");
    let res = circfit(&["generate", "--model", "theorem", "--params", r#"{"n":4,"h":0.005}"#, "--seed", "3", "--output", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let body = fs::read_to_string(out).unwrap();
    let pts: Vec<(f64, f64)> = body
        .lines()
        .skip(1)
        .map(|l| {
            let (x, y) = l.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect();
    assert_eq!(pts.len(), 4);
    let h2 = h * h;
    assert!(pts[0].0.abs() <= h2 && (pts[0].1 + 1.0).abs() <= h2);
    assert!(pts[3].0.abs() <= h && (pts[3].1 - 1.0).abs() <= h2);
    for p in &pts[1..3] {
        assert!(p.0.abs() <= h2 && p.1.abs() <= h2);
    }
}

#[test]
fn noiseless_line_study_has_no_exceedances() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"trials":200,"seed":1,"alpha":0.5,"beta":2,"n":8,"sigma":0,"t_grid":[0.01,0.1],"thresholds":[1,10]}"#;
    let res = circfit(&["study", "line-slope", "--config", cfg, "--outdir", dir.path().to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let j = json(&dir.path().join("report.json"));
    for key in ["exceed_m", "exceed_l"] {
        assert!(j["report"][key].as_array().unwrap().iter().all(|v| v.as_f64() == Some(0.0)), "{key}");
    }
    assert!(dir.path().join("trials.csv").exists());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn invalid_study_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let res = circfit(&["study", "tails", "--config", r#"{"trials":0}"#, "--outdir", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!dir.path().join("manifest.json").exists());
}
