use std::process::{Command, Output};

fn weakmeas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weakmeas"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn invalid_anomaly_angle_exits_2_with_message() {
    let out = weakmeas(&["anomaly", "--phi", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("phi must lie in [0, π/2) for anomaly"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn every_violation_is_reported() {
    let out = weakmeas(&["anomaly", "--sigma", "-1", "--n", "0", "--g2", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    for needle in ["sigma must be positive", "n must be at least 1", "g2 does not apply"] {
        assert!(err.contains(needle), "missing {needle:?} in {err}");
    }
}

#[test]
fn unknown_integrator_is_rejected() {
    let out = weakmeas(&["decoherence", "--integrator", "rk45"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("integrator must be kraus or euler-maruyama"));
}

#[test]
fn unconverged_collapse_exits_3() {
    let out = weakmeas(&["collapse", "--t", "0.5", "--dt", "0.01", "--n-traj", "20"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("did not meet the collapse criterion"));
}

#[test]
fn decoherence_csv_matches_the_exponential() {
    let out = weakmeas(&["decoherence", "--t", "1", "--dt", "0.001", "--record-every", "250"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[0], "t");
    let col = header.iter().position(|&h| h == "rho_0_1_re").unwrap();
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    for row in rows {
        let t = row[0];
        let expected = 0.5 * (-t / 2.0).exp();
        assert!((row[col] - expected).abs() < 1e-12, "t={t}: {} vs {expected}", row[col]);
    }
}

#[test]
fn same_seed_gives_identical_bytes() {
    let args = ["weak-limit", "--reps", "4", "--seed", "99", "--format", "json"];
    let (a, b) = (weakmeas(&args), weakmeas(&args));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = weakmeas(&["weak-limit", "--reps", "4", "--seed", "100", "--format", "json"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "# anomaly run\nn = 400\nseed = 12\nsigma = 10\n").unwrap();
    let from_file = weakmeas(&["anomaly", "--format", "json", "--config", path.to_str().unwrap()]);
    let from_flags = weakmeas(&["anomaly", "--format", "json", "--n", "400", "--seed", "12"]);
    assert_eq!(from_file.status.code(), Some(0));
    assert_eq!(from_file.stdout, from_flags.stdout);
    let overridden = weakmeas(&[
        "anomaly",
        "--format",
        "json",
        "--seed",
        "13",
        "--config",
        path.to_str().unwrap(),
    ]);
    assert_ne!(overridden.stdout, from_file.stdout);
}

#[test]
fn unwritable_output_exits_1() {
    let out = weakmeas(&["meter-check", "--n", "2", "--output", "/nonexistent-dir/x.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn trajectory_record_has_time_and_alpha_columns() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("traj.csv");
    let out = weakmeas(&[
        "classical-continuous",
        "--t",
        "0.1",
        "--dt",
        "0.01",
        "--record",
        rec.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = std::fs::read_to_string(&rec).unwrap();
    assert!(text.starts_with("t,alpha,w_0,w_1\n"), "{text}");
    assert_eq!(text.lines().count(), 12);
}
