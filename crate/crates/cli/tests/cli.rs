use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mubqpt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mubqpt"))
        .args(args)
        .env("MUBQPT_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn mub_gen_and_verify() {
    let out = mubqpt(&["mub", "gen", "--dim", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["dim"], 4);
    assert_eq!(v["bases"].as_array().unwrap().len(), 5);

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("m3.json");
    assert!(
        mubqpt(&["mub", "gen", "--dim", "3", "--out", path_str(&file)])
            .status
            .success()
    );
    let report = mubqpt(&["mub", "verify", "--in", path_str(&file)]);
    assert_eq!(report.status.code(), Some(0));
    assert_eq!(stdout_json(&report)["pass"], true);
}

#[test]
fn non_prime_power_is_a_validation_error() {
    let out = mubqpt(&["mub", "gen", "--dim", "6"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("prime-power"));
    assert!(out.stdout.is_empty());
}

#[test]
fn corrupted_basis_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.json");
    let out = mubqpt(&["mub", "gen", "--dim", "2"]);
    let mut v = stdout_json(&out);
    v["bases"][1][0][0][0] = Value::from(0.9);
    std::fs::write(&file, v.to_string()).unwrap();
    let report = mubqpt(&["mub", "verify", "--in", path_str(&file)]);
    assert_eq!(report.status.code(), Some(1));
    assert_eq!(stdout_json(&report)["pass"], false);
}

#[test]
fn complexity_uses_given_costs() {
    let out = mubqpt(&["mub", "complexity", "--dim", "4", "--c-alpha", "0,0,0,1,1"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["total"], 2);
    assert_eq!(v["qpt_gates"], 16);
    assert_eq!(
        mubqpt(&["mub", "complexity", "--dim", "4", "--c-alpha", "1,x"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn channel_apply_and_check() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("rho.json");
    std::fs::write(
        &state,
        r#"{"rows":2,"cols":2,"data":[[1,0],[0,0],[0,0],[0,0]]}"#,
    )
    .unwrap();
    let out = mubqpt(&[
        "channel",
        "apply",
        "--channel",
        "ad",
        "--param",
        "1",
        "--state",
        path_str(&state),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = stdout_json(&out);
    // Full damping sends |0><0| to itself.
    assert!((v["data"][0][0].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let kraus = dir.path().join("k.json");
    std::fs::write(
        &kraus,
        r#"{"dim":2,"name":"flip","operators":[{"rows":2,"cols":2,"data":[[0,0],[1,0],[1,0],[0,0]]}]}"#,
    )
    .unwrap();
    let out = mubqpt(&["channel", "check", "--in", path_str(&kraus)]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["trace_preserving"], true);
    assert_eq!(v["unital"], true);
}

#[test]
fn qpt_run_noise_free_has_unit_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let chi = dir.path().join("chi.json");
    let out = mubqpt(&[
        "qpt",
        "run",
        "--dim",
        "4",
        "--channel",
        "cnot",
        "--mu",
        "0",
        "--out",
        path_str(&chi),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = stdout_json(&out);
    assert!((v["fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    let file: Value = serde_json::from_str(&std::fs::read_to_string(&chi).unwrap()).unwrap();
    assert_eq!(file["index_order"], "gamma-major");
    assert_eq!(file["rows"], 20);
}

#[test]
fn qpt_run_refined_is_psd() {
    let out = mubqpt(&[
        "qpt",
        "run",
        "--dim",
        "2",
        "--channel",
        "dep:0.2",
        "--mu",
        "0.05",
        "--seed",
        "3",
        "--refine",
        "--max-iterations",
        "200",
    ]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert!(v["min_eigenvalue"].as_f64().unwrap() >= -1e-10);
    assert!(v["refinement"]["iterations"].as_u64().unwrap() <= 200);
}

#[test]
fn validation_errors_are_aggregated() {
    let out = mubqpt(&["qpt", "run", "--mu", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("--dim") && err.contains("--channel") && err.contains("--mu"),
        "{err}"
    );
}

#[test]
fn unknown_flag_exits_one() {
    assert_eq!(mubqpt(&["sweep", "--bogus"]).status.code(), Some(1));
    assert_eq!(mubqpt(&["sweep", "--help"]).status.code(), Some(0));
}

#[test]
fn sweep_writes_csv_pair_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = |out: &Path| {
        vec![
            "sweep".to_string(),
            "--dim".into(),
            "2".into(),
            "--channels".into(),
            "dep:0.1,ad:0.4".into(),
            "--mu-start".into(),
            "0.01".into(),
            "--mu-end".into(),
            "0.03".into(),
            "--trials".into(),
            "4".into(),
            "--seed".into(),
            "11".into(),
            "--out".into(),
            path_str(out).to_string(),
        ]
    };
    let run = |out: &Path| {
        let owned = args(out);
        let refs: Vec<&str> = owned.iter().map(String::as_str).collect();
        mubqpt(&refs)
    };
    let first = run(&a);
    assert!(
        first.status.success(),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    assert!(run(&b).status.success());
    let rows = std::fs::read_to_string(&a).unwrap();
    assert_eq!(rows.lines().count(), 1 + 3 * 2 * 4);
    assert!(rows.starts_with("mu,channel,trial,fidelity,refined"));
    assert_eq!(rows, std::fs::read_to_string(&b).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("a.agg.csv")).unwrap(),
        std::fs::read(dir.path().join("b.agg.csv")).unwrap()
    );
    let log = String::from_utf8_lossy(&first.stderr);
    assert_eq!(log.lines().filter(|l| l.contains("mu=")).count(), 3);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"dim": 2, "channels": "dep:0.1", "trials": 2, "mu-start": 0.02, "mu-end": 0.02, "format": "json"}"#).unwrap();
    let out = mubqpt(&["--config", path_str(&cfg), "sweep", "--channels", "ad:0.3"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = stdout_json(&out);
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert_eq!(v["rows"][0]["channel"], "ad:0.3");

    std::fs::write(&cfg, r#"{"dimension": 2}"#).unwrap();
    assert_eq!(
        mubqpt(&["--config", path_str(&cfg), "sweep"]).status.code(),
        Some(1)
    );
}

#[test]
fn bad_thread_setting_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_mubqpt"))
        .args([
            "sweep",
            "--dim",
            "2",
            "--channels",
            "id",
            "--trials",
            "1",
            "--mu-end",
            "0.01",
        ])
        .env("MUBQPT_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
