use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_ecoinf"))
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).env_remove("ECOINF_THREADS").output().expect("spawn")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn error_record(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().rev().find(|l| l.starts_with('{')).expect("json record on stderr");
    serde_json::from_str(line).unwrap()
}

fn simulate(dir: &Path, scenario: &str, g: &str, seed: &str) -> PathBuf {
    let out = dir.join(format!("sim-{scenario}-{seed}"));
    let r = run(&["simulate", "--scenario", scenario, "--G", g, "--seed", seed, "--out", s(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    out
}

#[test]
fn simulate_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        assert!(run(&["simulate", "--scenario", "A", "--seed", "1", "--out", s(out)]).status.success());
    }
    for f in ["data.csv", "truth.csv", "config.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let data = std::fs::read_to_string(a.join("data.csv")).unwrap();
    assert!(data.starts_with("# seed=1 config="));
}

#[test]
fn goodman_estimates_have_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "A", "20", "191");
    let out = dir.path().join("est");
    let r = run(&["estimate", "--method", "goodman", "--data", s(&sim.join("data.csv")), "--out", s(&out)]);
    assert!(r.status.success());
    let text = std::fs::read_to_string(out.join("estimates.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# seed=0 config="));
    assert_eq!(lines.next().unwrap(), "predictor,outcome,estimate,se,ci_lo,ci_hi");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "grp1");
    let b1: f64 = first[2].parse().unwrap();
    assert!((b1 - 0.509).abs() < 0.01, "{b1}");
    let config: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["resolved"]["config"]["args"]["method"], "goodman");
}

#[test]
fn rerun_reproduces_seeded_mcmc() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "C", "30", "4");
    let mut bodies = Vec::new();
    for name in ["r1", "r2"] {
        let out = dir.path().join(name);
        let r = run(&["estimate", "--method", "rosen", "--iters", "200", "--burnin", "50", "--chains", "2", "--seed", "9", "--data", s(&sim.join("data.csv")), "--out", s(&out), "-q"]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        bodies.push((std::fs::read(out.join("estimates.csv")).unwrap(), std::fs::read(out.join("quantiles.csv")).unwrap()));
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn missing_covariate_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "A", "20", "2");
    let out = dir.path().join("dml");
    let r = run(&["estimate", "--method", "dml", "--basis", "z1:bins(5)", "--data", s(&sim.join("data.csv")), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(5));
    assert_eq!(error_record(&r)["error"], "missing-covariate");
    assert!(!out.exists());
}

#[test]
fn distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "C", "50", "1");
    let data = sim.join("data.csv");
    let out = dir.path().join("x");
    let usage = run(&["estimate", "--method", "goodman", "--data", s(&data), "--no-such-flag"]);
    assert_eq!(usage.status.code(), Some(2));
    assert_eq!(error_record(&usage)["exit_code"], 2);
    let basis = run(&["estimate", "--method", "dml", "--basis", "z:bins(", "--data", s(&data), "--out", s(&out)]);
    assert_eq!(basis.status.code(), Some(3));
    let knot = run(&["estimate", "--method", "dml", "--basis", "z:spline(5.0)", "--data", s(&data), "--out", s(&out)]);
    assert_eq!(knot.status.code(), Some(3));
    let missing = run(&["estimate", "--method", "goodman", "--data", s(&dir.path().join("absent.csv")), "--out", s(&out)]);
    assert_eq!(missing.status.code(), Some(4));
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "geo,x_a,x_b,n,y_y\ng1,0.5,0.6,10,0.3\n").unwrap();
    let data_err = run(&["estimate", "--method", "goodman", "--data", s(&bad), "--out", s(&out)]);
    assert_eq!(data_err.status.code(), Some(6));
    let est = run(&["estimate", "--method", "goodman-z", "--covariates", "z", "--data", s(&sim_with_constant_z(dir.path())), "--out", s(&out)]);
    assert_eq!(est.status.code(), Some(7), "{}", String::from_utf8_lossy(&est.stderr));
    assert!(!out.exists());
}

fn sim_with_constant_z(dir: &Path) -> PathBuf {
    let p = dir.join("constz.csv");
    let mut body = String::from("geo,x_a,x_b,n,y_y,z_z\n");
    for (i, x) in [0.1, 0.3, 0.5, 0.7, 0.9].iter().enumerate() {
        body.push_str(&format!("g{i},{x},{},100,{},2\n", 1.0 - x, 0.2 + 0.5 * x));
    }
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn bounds_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "B", "20", "191");
    let data = sim.join("data.csv");
    let out = dir.path().join("b");
    assert!(run(&["bounds", "--data", s(&data), "--out", s(&out)]).status.success());
    let text = std::fs::read_to_string(out.join("bounds.csv")).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "geo,outcome,category,lo,hi,vacuous_flag");
    assert_eq!(text.lines().count(), 2 + 21 * 2);
    assert!(out.join("global_bounds.csv").exists());
    let d = dir.path().join("d");
    assert!(run(&["diagnose", "--data", s(&data), "--out", s(&d)]).status.success());
    let diag = std::fs::read_to_string(d.join("diagnostics.csv")).unwrap();
    let last: Vec<&str> = diag.lines().last().unwrap().split(',').collect();
    let cook: f64 = last[4].parse().unwrap();
    assert!(cook > 30.0, "{cook}");
}

#[test]
fn validate_writes_metrics_and_records_failures() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "A", "30", "3");
    let out = dir.path().join("v");
    let r = run(&[
        "validate",
        "--methods",
        "goodman,king-em,rosen",
        "--data",
        s(&sim.join("data.csv")),
        "--truth",
        s(&sim.join("truth.csv")),
        "--out",
        s(&out),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.lines().any(|l| l.starts_with("goodman,y,grp1,")));
    assert!(metrics.lines().any(|l| l.starts_with("king-em,y,grp1,")));
    // Scenario A has continuous outcomes, which the count model rejects.
    let failures = std::fs::read_to_string(out.join("failures.csv")).unwrap();
    assert!(failures.lines().any(|l| l.starts_with("rosen,")));
    for line in metrics.lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        let (me, mae): (f64, f64) = (f[3].parse().unwrap(), f[4].parse().unwrap());
        assert!(mae >= me.abs());
    }
    assert!(out.join("estimates_long.csv").exists());
}

#[test]
fn json_format_mirrors_csv() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "A", "20", "5");
    let out = dir.path().join("j");
    assert!(run(&["estimate", "--method", "goodman", "--format", "json", "--data", s(&sim.join("data.csv")), "--out", s(&out)]).status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("estimates.json")).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert!(v["provenance"].as_str().unwrap().starts_with("seed=0 config="));
}

#[test]
fn thread_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "A", "20", "6");
    let out = dir.path().join("t");
    let r = Command::new(bin())
        .args(["estimate", "--method", "king-em", "--data", s(&sim.join("data.csv")), "--out", s(&out)])
        .env("ECOINF_THREADS", "2")
        .output()
        .unwrap();
    assert!(r.status.success());
}
