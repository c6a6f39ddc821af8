use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ndde(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ndde"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn last_json(o: &Output) -> serde_json::Value {
    let text = stdout(o);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

#[test]
fn simulate_negation_example() {
    let dir = tempfile::tempdir().unwrap();
    let o = ndde(dir.path(), &["simulate", "--field", "linear", "--k0", "-2", "--tau", "1", "--y0", "1", "--T", "1", "--steps", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,y1"));
    // 10 history rows, the initial row and 10 steps
    assert_eq!(csv.lines().count(), 22);
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(last, vec![1.0, -1.0]);
}

#[test]
fn simulate_is_reproducible_for_a_seed() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["simulate", "--field", "tanh", "--dim", "3", "--tau", "0.2", "--steps", "50", "--seed", "7"];
    assert!(ndde(a.path(), &args).status.success());
    assert!(ndde(b.path(), &args).status.success());
    let mut other = args.to_vec();
    other[args.len() - 1] = "8";
    assert!(ndde(c.path(), &other).status.success());
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("trajectory.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn embed_nonaugmented_example() {
    let dir = tempfile::tempdir().unwrap();
    let o = ndde(
        dir.path(),
        &["embed", "--thm", "3.5", "--target", "neg", "--K", "4", "--tau", "1", "--w", "1", "--wt", "1", "--samples", "101", "--tol", "1e-2"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("within tolerance"));
    let csv = fs::read_to_string(dir.path().join("embed.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x1,target1,output1,error"));
    assert_eq!(csv.lines().count(), 102);
}

#[test]
fn embed_tolerance_failure_is_numeric() {
    let dir = tempfile::tempdir().unwrap();
    let o = ndde(dir.path(), &["embed", "--construction", "nonaugmented", "--target", "sin", "--tau", "1", "--steps", "10", "--tol", "1e-6"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error: kind=numeric "));
}

#[test]
fn embed_precondition_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = ndde(dir.path(), &["embed", "--construction", "nonaugmented", "--target", "neg", "--K", "1", "--tau", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error: kind=precondition "));
    assert!(!dir.path().join("embed.csv").exists());
}

#[test]
fn embed_spec_feeds_discretize() {
    let dir = tempfile::tempdir().unwrap();
    let o = ndde(dir.path(), &["embed", "--construction", "augmented", "--target", "affine", "--a", "-0.5", "--b", "0.3", "--tau", "0.5", "--save-spec"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let spec = dir.path().join("spec.json");
    let o = ndde(dir.path(), &["discretize", "--spec", spec.to_str().unwrap(), "--steps", "20", "--x", "-1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("max_difference=0.0000000000000000e0"));
}

#[test]
fn discretize_alignment_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = ndde(dir.path(), &["discretize", "--tau", "0.3", "--T", "0.9", "--steps", "9", "--delays", "A1,B2,C1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("alignment.csv")).unwrap();
    assert!(csv.starts_with("l,A1,B2,C1\n0,-1,0,0\n1,0,1,1\n2,1,0,1\n"));
    assert!(dir.path().join("dense_report.txt").exists());
    let bad = ndde(dir.path(), &["discretize", "--tau", "0.3", "--T", "0.9", "--steps", "9", "--delays", "D1"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn lambertw_branches() {
    let dir = tempfile::tempdir().unwrap();
    let o = ndde(dir.path(), &["lambertw", "--branch", "0", "--x", "-0.2"]);
    assert!(o.status.success());
    let w = last_json(&o)["W"].as_f64().unwrap();
    assert!((w + 0.25917110181907376).abs() < 1e-15);
    let o = ndde(dir.path(), &["lambertw", "--branch", "-1", "--x", "-0.2"]);
    assert!((last_json(&o)["W"].as_f64().unwrap() + 2.5426413577735263).abs() < 1e-14);
    let o = ndde(dir.path(), &["lambertw", "--branch", "0", "--x", "-1"]);
    assert_eq!(o.status.code(), Some(3));
    let o = ndde(dir.path(), &["lambertw", "--branch", "2", "--x", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn attract_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = ndde(dir.path(), &["attract", "--k0", "-1", "--tau", "0.25", "--y0", "1", "--T", "5", "--steps", "20000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("attraction.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,y,ybar,gap,envelope"));
    assert_eq!(csv.lines().count(), 20002);
    let s = last_json(&o);
    assert!(s["ybar0_converged"].as_bool().unwrap());
    assert!(s["fitted_rate"].as_f64().unwrap() < s["lambda1"].as_f64().unwrap());
}

#[test]
fn constants_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["constants", "--K", "1", "--A", "0", "--T", "1", "--M", "1", "--r0", "1", "--r1", "0.25", "--eps", "0.1", "--C2", "0.5"];
    let o = ndde(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("constants.json")).unwrap()).unwrap();
    assert_eq!(v["C1"].as_f64().unwrap(), std::f64::consts::E);
    assert!((v["tau0"].as_f64().unwrap() - 0.0013358182481050374).abs() < 1e-15);
    assert_eq!(v["C2_estimated"], false);
    let o = ndde(dir.path(), &["constants", "--K", "-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn regions_sweep_example() {
    let dir = tempfile::tempdir().unwrap();
    let o = ndde(dir.path(), &["regions", "--sweep", "--kmax", "10", "--taumax", "1", "--res", "200", "--svg"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("regions.csv")).unwrap();
    assert_eq!(csv.lines().count(), 200 * 200 + 1);
    assert_eq!(last_json(&o)["overlaps"], 0);
    assert!(fs::read_to_string(dir.path().join("regions.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn regions_single_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = ndde(dir.path(), &["regions", "--K", "10", "--tau", "0.5"]);
    assert_eq!(last_json(&o)["label"], "UE_nonaugmented");
    let o = ndde(dir.path(), &["regions", "--K", "5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = ndde(dir.path(), &["regions", "--K", "5", "--tau", "0.5", "--res", "10"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"k0": -2, "tau": 1, "T": 1, "steps": 10}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    let o = ndde(dir.path(), &["simulate", "--config", cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("y=-1.0000000000000000e0"));
    let o = ndde(dir.path(), &["simulate", "--config", cfg, "--k0", "0"]);
    assert!(stdout(&o).contains("y=1.0000000000000000e0"));

    fs::write(dir.path().join("bad.json"), r#"{"k0": -2, "stpes": 10}"#).unwrap();
    let o = ndde(dir.path(), &["simulate", "--config", dir.path().join("bad.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stpes"));
}

#[test]
fn validation_errors_are_single_lines() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["simulate", "--steps", "0"],
        vec!["simulate", "--tau", "0.33", "--steps", "10"],
        vec!["simulate", "--nope"],
        vec!["attract", "--tau", "-1"],
        vec!["embed", "--target", "square", "--lo", "1", "--hi", "0"],
    ] {
        let o = ndde(dir.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = stderr(&o);
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with("error: kind="), "{err}");
        assert!(err.contains(" msg=\""));
    }
}

#[test]
fn every_subcommand_has_help() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["simulate", "embed", "discretize", "lambertw", "attract", "constants", "regions"] {
        let o = ndde(dir.path(), &[cmd, "--help"]);
        assert!(o.status.success(), "{cmd}");
        assert!(stdout(&o).contains("Usage:"));
    }
}
