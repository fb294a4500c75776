//! End-to-end runs of the `statecon` binary.

use std::path::Path;
use std::process::{Command, Output};

fn statecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_statecon")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Data rows as maps from column name to field.
fn records(csv: &str) -> Vec<std::collections::HashMap<String, String>> {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<String> = lines.next().unwrap().split(',').map(str::to_string).collect();
    lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(str::to_string)).collect())
        .collect()
}

fn field(rec: &std::collections::HashMap<String, String>, name: &str) -> f64 {
    rec[name].parse().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn estimate_example1_near_normal_tail() {
    let o = statecon(&["estimate", "--problem", "example1", "--paths", "40000", "--no-timestamp"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("# config_sha256="));
    assert!(text.contains("# units: t=time x_1=state u_mean=1 u_se=1 v=cost"));
    let rec = &records(&text)[0];
    let (u, se) = (field(rec, "u_mean"), field(rec, "u_se"));
    assert!((u - 0.066_807_201_268_858_07).abs() <= 4.0 * se, "{u} ± {se}");
    assert_eq!(rec["x_1"], "-1.5");
    assert_eq!(rec["seed"], "42");
}

#[test]
fn estimate_unconstrained_is_exact() {
    let o = statecon(&["estimate", "--problem", "unconstrained", "--paths", "100", "--no-timestamp"]);
    let rec = &records(&stdout(&o))[0];
    assert_eq!(rec["u_mean"], "1");
    assert_eq!(rec["u_se"], "0");
    assert_eq!(rec["v"], "0");
}

#[test]
fn estimate_inside_forbidden_set_writes_inf() {
    let o = statecon(&["estimate", "--problem", "example2", "--x=-0.5", "--paths", "100", "--no-timestamp"]);
    assert_eq!(o.status.code(), Some(0));
    let rec = &records(&stdout(&o))[0];
    assert_eq!(rec["u_mean"], "0");
    assert_eq!(rec["v"], "inf");
}

#[test]
fn same_seed_same_bytes_and_timestamp_flag() {
    let args = ["estimate", "--problem", "example2", "--paths", "5000", "--seed", "9"];
    let a = statecon(&[&args[..], &["--no-timestamp"]].concat());
    let b = statecon(&[&args[..], &["--no-timestamp", "--workers", "3"]].concat());
    assert_eq!(a.stdout, b.stdout);
    let stamped = stdout(&statecon(&args));
    assert!(stamped.contains("# generated_unix="));
    let c = statecon(&["estimate", "--problem", "example2", "--paths", "5000", "--seed", "10", "--no-timestamp"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn config_errors_carry_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "bad.json", "{\n  \"problem\": \"example1\",\n  \"mc\": {\"n_paths\": -3}\n}");
    let o = statecon(&["estimate", "--config", &path]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("bad.json:3:"), "{err}");
    assert!(err.contains("mc.n_paths"), "{err}");
}

#[test]
fn missing_problem_and_unknown_check_are_config_errors() {
    assert_eq!(statecon(&["estimate"]).status.code(), Some(1));
    let o = statecon(&["verify", "nonsense", "--problem", "example1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nonsense"));
}

#[test]
fn nonfinite_dynamics_abort() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        "nan.json",
        r#"{"problem": {"kind": "inline", "dim": 1, "drift": ["1/(x-x)"], "dispersion": [["1"]]}, "mc": {"n_paths": 50}}"#,
    );
    let o = statecon(&["estimate", "--config", &path]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn verify_hjb_example1_passes() {
    let o = statecon(&["verify", "hjb", "--problem", "example1", "--no-timestamp"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let recs = records(&stdout(&o));
    assert_eq!(recs.iter().filter(|r| r["quantity"] == "hjb_residual").count(), 25);
    assert!(recs.iter().all(|r| r["pass"] == "true"));
}

#[test]
fn verify_theta_example2_passes() {
    let o = statecon(&["verify", "theta", "--problem", "example2", "--paths", "20000", "--no-timestamp"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn verify_htransform_unconstrained_passes() {
    let o = statecon(&["verify", "htransform", "--problem", "unconstrained", "--paths", "20000", "--no-timestamp"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let recs = records(&stdout(&o));
    let ks = recs.iter().find(|r| r["quantity"] == "ks_distance").unwrap();
    assert!(field(ks, "measured") < 0.02);
}

#[test]
fn tolerance_failure_lists_measured_and_bound() {
    // coarse steps without the bridge test overstate survival
    let o = statecon(&[
        "verify", "theta", "--problem", "example2", "--no-bridge", "--dt", "0.05", "--x=0.3", "--paths", "20000",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("FAIL theta theta_mean"), "{err}");
    assert!(err.contains("vs bound"), "{err}");
}

#[test]
fn simulate_example1_paths_end_positive() {
    let o = statecon(&["simulate", "--problem", "example1", "--no-timestamp"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let recs = records(&text);
    assert_eq!(recs.len(), 10 * 201);
    let finals: Vec<f64> = recs.iter().filter(|r| r["t"] == "1").map(|r| field(r, "x_1")).collect();
    assert_eq!(finals.len(), 10);
    assert!(finals.iter().all(|x| *x > 0.0), "{finals:?}");
    assert!(text.lines().last().unwrap().starts_with("# summary: paths=10 violations=0 violation_fraction=0"));
}

#[test]
fn simulate_example3_avoids_the_box() {
    let o = statecon(&["simulate", "--problem", "example3", "--no-timestamp"]);
    let recs = records(&stdout(&o));
    let at_t0: Vec<f64> = recs.iter().filter(|r| r["t"] == "0.2").map(|r| field(r, "x_1")).collect();
    assert_eq!(at_t0.len(), 10);
    assert!(at_t0.iter().all(|x| !(-2.0..=2.0).contains(x)), "{at_t0:?}");
}

#[test]
fn cost_reports_reference_value() {
    let o = statecon(&["cost", "--problem", "example2", "--x", "1.0", "--paths", "2000", "--no-timestamp"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rec = &records(&stdout(&o))[0];
    assert_eq!(rec["control"], "closed_form");
    assert!((field(rec, "v_ref") - 0.763_430_292_604_252).abs() < 1e-12);
    let zero = statecon(&["cost", "--problem", "example2", "--x", "1.0", "--control", "zero", "--paths", "2000"]);
    let rec = &records(&stdout(&zero))[0];
    assert_eq!(rec["j_mean"], "0");
    assert!(field(rec, "violation_fraction") > 0.2);
}

#[test]
fn config_file_fields_and_out_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        "run.json",
        r#"{"problem": "example2", "grid": {"dt": 0.01}, "mc": {"n_paths": 1000, "master_seed": 3},
            "outputs": {"fields": ["x_1", "u_mean"]}}"#,
    );
    let out = dir.path().join("out.csv");
    let o = statecon(&["grid", "--config", &path, "--times", "0", "--xs=-1,0.5,1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    let recs = records(&text);
    assert_eq!(recs.len(), 3);
    assert_eq!(recs[0].len(), 2);
    assert_eq!(recs[0]["u_mean"], "0");
}

#[test]
fn out_path_does_not_change_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let o = statecon(&["estimate", "--problem", "example1", "--paths", "100", "--no-timestamp", "--out", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn inline_problem_with_user_control() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        "ou.json",
        r#"{"problem": {"kind": "inline", "dim": 1, "drift": ["-x"], "dispersion": [["0.5"]],
            "running_cost": "x^2"}, "mc": {"n_paths": 2000}, "grid": {"dt": 0.01}}"#,
    );
    let o = statecon(&["cost", "--config", &path, "--x", "1", "--control", "-x", "--no-timestamp"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rec = &records(&stdout(&o))[0];
    assert_eq!(rec["control"], "user_supplied");
    assert_eq!(rec["v_ref"], "");
    assert!(field(rec, "j_mean") > 0.0);
}
