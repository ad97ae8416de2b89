use std::path::PathBuf;
use std::process::Command;

use diec::cli::{run, CliError, CURVE_HEADER, ENTROPY_CURVE_HEADER};
use diec::sim::{parse_transcript, TRANSCRIPT_COLUMNS};

fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    std::fs::read_to_string(path).unwrap()
}

fn capture(args: &[&str]) -> Result<String, CliError> {
    let mut buf = Vec::new();
    run(
        std::iter::once("diec").chain(args.iter().copied()),
        &mut buf,
    )?;
    Ok(String::from_utf8(buf).unwrap())
}

fn binary(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_diec"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn entropy_curve_matches_golden() {
    let out = capture(&["entropy-curve", "--omegas", "0.8125,0.75,0.853553"]).unwrap();
    assert_eq!(out, golden("entropy_curve.csv"));
    assert!(out.starts_with(ENTROPY_CURVE_HEADER));
}

#[test]
fn asymptotic_curve_matches_golden() {
    let out = capture(&[
        "curve",
        "--asymptotic-only",
        "--omegas",
        "0.78,0.8,0.853553",
    ])
    .unwrap();
    assert_eq!(out, golden("curve_asymptotic.csv"));
    let last = out.lines().last().unwrap();
    let rate: f64 = last.split(',').nth(3).unwrap().parse().unwrap();
    assert!((rate - 1.0).abs() < 1e-4);
}

#[test]
fn transcript_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let p = path.to_str().unwrap();
    capture(&[
        "simulate",
        "--model",
        "honest-iid",
        "--xi",
        "0.2",
        "--n",
        "16",
        "--gamma",
        "0.5",
        "--omega-exp",
        "0.8",
        "--delta-est",
        "0.01",
        "--protocol",
        "modified",
        "--trials",
        "1",
        "--seed",
        "11",
        "--transcript",
        p,
    ])
    .unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, golden("transcript_modified.csv"));
    let parsed = parse_transcript(&text).unwrap();
    assert_eq!(parsed.rounds.len(), 16);
    assert!(text.lines().any(|l| l == TRANSCRIPT_COLUMNS));
    // ⊥ is written as an empty field.
    assert!(text.lines().any(|l| l.ends_with(",,,,,,0,0")));
}

#[test]
fn curve_grid_shape() {
    let out = capture(&["curve", "--n-values", "1e6", "--omegas", "0.84"]).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines, vec![CURVE_HEADER, lines[1]]);
    assert!(lines[1].starts_with("1000000,0.84,"));
    let per_point = capture(&[
        "curve",
        "--n-values",
        "1e6",
        "--omegas",
        "0.84",
        "--gamma-policy",
        "per-point",
    ])
    .unwrap();
    assert_eq!(per_point.lines().count(), 2);
    let sorted = capture(&[
        "curve",
        "--n-values",
        "1e7,1e6",
        "--omegas",
        "0.84,0.82",
        "--asymptotic",
    ])
    .unwrap();
    let keys: Vec<String> = sorted
        .lines()
        .skip(1)
        .map(|l| l.split(',').take(2).collect::<Vec<_>>().join(","))
        .collect();
    assert_eq!(
        keys,
        vec![
            "1000000,0.82",
            "1000000,0.84",
            "10000000,0.82",
            "10000000,0.84",
            "asymptotic,0.82",
            "asymptotic,0.84"
        ]
    );
    assert!(matches!(
        capture(&["curve", "--asymptotic-only", "--omegas", ""]),
        Err(_)
    ));
}

#[test]
fn rate_record_fields_and_exact_twins() {
    let out = capture(&["rate", "--n", "1e8", "--omega-exp", "0.8447", "--exact"]).unwrap();
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let keys: Vec<&str> = v
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .filter(|k| !k.ends_with("_exact"))
        .collect();
    assert_eq!(
        keys,
        vec![
            "n",
            "omega_exp",
            "gamma",
            "delta_est",
            "eps_dist",
            "eps_snd",
            "eps_cmp",
            "eps_smo",
            "eta_opt",
            "pt_omega",
            "second_order_v",
            "log_l",
            "rate_raw",
            "rate",
            "mode"
        ]
    );
    let exact = v["rate_exact"].as_f64().unwrap();
    let rounded = v["rate"].as_f64().unwrap();
    assert!((exact - rounded).abs() < 1e-6);
    assert!((exact - 0.540_666_32).abs() < 0.01);
    let n = v["n"].as_f64().unwrap();
    assert!(
        (v["log_l_exact"].as_f64().unwrap() / n - v["rate_raw_exact"].as_f64().unwrap()).abs()
            < 1e-12
    );
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"n": 1e6, "omega_exp": 0.8, "gamma": 0.5, "eps_smo": 1e-4}"#,
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let from_file: serde_json::Value =
        serde_json::from_str(&capture(&["--config", c, "rate"]).unwrap()).unwrap();
    assert_eq!(from_file["gamma"].as_f64(), Some(0.5));
    assert_eq!(from_file["n"].as_u64(), Some(1_000_000));
    let overridden: serde_json::Value =
        serde_json::from_str(&capture(&["--config", c, "rate", "--gamma", "0.25"]).unwrap())
            .unwrap();
    assert_eq!(overridden["gamma"].as_f64(), Some(0.25));
    assert_eq!(overridden["eps_smo"].as_f64(), Some(1e-4));

    std::fs::write(&cfg, r#"{"unknown_key": 1}"#).unwrap();
    assert!(matches!(
        capture(&["--config", c, "rate"]),
        Err(CliError::Config { .. })
    ));
}

#[test]
fn exact_sidecar_for_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bound.csv");
    let o = out.to_str().unwrap();
    capture(&["entropy-curve", "--omegas", "0.8", "--out", o, "--exact"]).unwrap();
    let side: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("bound.csv.exact.json")).unwrap(),
    )
    .unwrap();
    let g = side[0]["conditional_bound_exact"].as_f64().unwrap();
    assert!((g + 0.226_053_388).abs() < 1e-8);
    assert!(capture(&["entropy-curve", "--exact"]).is_err());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let t = dir.path().join(format!("t{k}.csv"));
        let s = capture(&[
            "simulate",
            "--model",
            "memory-switcher",
            "--n",
            "500",
            "--gamma",
            "0.3",
            "--trials",
            "20",
            "--seed",
            "5",
            "--omega-exp",
            "0.8",
            "--transcript",
            t.to_str().unwrap(),
        ])
        .unwrap();
        outputs.push((s, std::fs::read_to_string(&t).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let curve = || capture(&["curve", "--n-values", "1e7", "--omegas", "0.8,0.84"]).unwrap();
    assert_eq!(curve(), curve());
}

#[test]
fn simulate_summaries() {
    let honest: serde_json::Value = serde_json::from_str(
        &capture(&[
            "simulate",
            "--n",
            "1e5",
            "--gamma",
            "0.1",
            "--omega-exp",
            "0.85",
            "--xi",
            "0.0102",
            "--trials",
            "200",
        ])
        .unwrap(),
    )
    .unwrap();
    let est = honest["abort_estimate"].as_f64().unwrap();
    let hi = honest["interval"][1].as_f64().unwrap();
    let bound = honest["hoeffding_bound"].as_f64().unwrap();
    assert!(est <= bound + (hi - est));
    let classical: serde_json::Value = serde_json::from_str(
        &capture(&[
            "simulate",
            "--model",
            "classical-deterministic",
            "--n",
            "1e4",
            "--omega-exp",
            "0.8",
            "--delta-est",
            "0.01",
            "--trials",
            "100",
        ])
        .unwrap(),
    )
    .unwrap();
    assert_eq!(classical["abort_estimate"].as_f64(), Some(1.0));
}

#[test]
fn process_exit_codes() {
    let ok = binary(&["verify-bound", "--betas", "2.8284271247461903"]);
    assert_eq!(ok.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(v["max_deviation"].as_f64(), Some(0.0));

    assert_eq!(
        binary(&["verify-twirl", "--states", "10"]).status.code(),
        Some(0)
    );

    let bad = binary(&[
        "rate",
        "--n",
        "1e6",
        "--omega-exp",
        "0.84",
        "--eps-smo",
        "0.5",
    ]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("eps_smo"));

    let unknown = binary(&["simulate", "--model", "telepathy"]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("noisy-drift"));

    assert_eq!(
        binary(&["entropy-curve", "--omegas", "0.7"]).status.code(),
        Some(1)
    );
    assert_eq!(binary(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(CliError::Verification("x".into()).exit_code(), 2);
}

#[test]
fn coarse_bound_verification_still_reports() {
    let out = capture(&["verify-bound", "--betas", "2.3,2.6", "--grid-step", "0.05"]).unwrap();
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["points"].as_array().unwrap().len(), 2);
    assert!(v["max_deviation"].as_f64().unwrap() < 1e-3);
}
