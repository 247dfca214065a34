use std::path::Path;
use std::process::{Command, Output};

use beamsteer_core::harness::ScenarioConfig;

fn beamsteer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamsteer"))
        .args(args)
        .output()
        .expect("binary runs")
}

const SMALL: &str = r#"{
    "agent": {"n_particles": 300, "hr": {"band_bpm": [90, 200]}},
    "environment": {"prf_hz": 500, "range": {"count": 8}, "noise": {"snr_db": 10}},
    "run": {"steps": 5, "seed": 4}
}"#;

fn write_small(dir: &Path) -> String {
    let p = dir.join("small.json");
    std::fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn default_config_round_trips() {
    let out = beamsteer(&["default-config"]);
    assert!(out.status.success());
    let cfg = ScenarioConfig::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, ScenarioConfig::default());
}

#[test]
fn simulate_traces_are_byte_identical_across_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small(dir.path());
    let mut traces = Vec::new();
    for (i, parallel) in ["true", "false"].iter().enumerate() {
        let trace = dir.path().join(format!("trace{i}.csv"));
        let summary = dir.path().join(format!("summary{i}.json"));
        let out = beamsteer(&[
            "simulate",
            "-c",
            &cfg,
            "--parallel",
            parallel,
            "--trace",
            trace.to_str().unwrap(),
            "--summary",
            summary.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        traces.push(std::fs::read(&trace).unwrap());

        let s: serde_json::Value = serde_json::from_slice(&std::fs::read(&summary).unwrap()).unwrap();
        for key in [
            "tracking_mae_rad",
            "hr_accuracy_5bpm",
            "hr_availability",
            "mean_step_latency_s",
            "config_digest",
            "seed",
            "config",
        ] {
            assert!(s.get(key).is_some(), "summary lacks {key}");
        }
        assert_eq!(s["seed"], 4);
    }
    assert_eq!(traces[0], traces[1]);

    let text = String::from_utf8(traces[0].clone()).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("t,x_gt,action,x_star,posterior_std,ess,resampled,r_star,hr_bpm,hr_confidence,wall_time_s,score_0,"));
    assert!(header.ends_with(",score_20"));
    assert_eq!(lines.count(), 5);
}

#[test]
fn fixed_policy_override_leaves_scores_empty() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small(dir.path());
    let out = beamsteer(&["simulate", "-c", &cfg, "--policy", "fixed:0.1", "--steps", "2", "--trace", "-"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text.lines().nth(1).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[2], "0.1");
    assert!(fields[11..].iter().all(|f| f.is_empty()));
}

#[test]
fn config_problems_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"run": {"stpes": 3}}"#).unwrap();
    assert_eq!(beamsteer(&["simulate", "-c", bad.to_str().unwrap()]).status.code(), Some(1));

    let cfg = write_small(dir.path());
    assert_eq!(beamsteer(&["simulate", "-c", &cfg, "--policy", "fixed:2"]).status.code(), Some(1));
    assert_eq!(beamsteer(&["simulate", "-c", "/nonexistent/x.json"]).status.code(), Some(1));
    assert_eq!(beamsteer(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(beamsteer(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_failures_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("short.json");
    // The world runs out of scripted positions at step 2.
    std::fs::write(
        &p,
        r#"{"environment": {"prf_hz": 500, "range": {"count": 4},
            "trajectory": {"kind": "scripted", "angles": [0.0, 0.1]}},
            "agent": {"n_particles": 50, "hr": {"band_bpm": [90, 200]}},
            "run": {"steps": 3}}"#,
    )
    .unwrap();
    let out = beamsteer(&["simulate", "-c", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step 2"));
}

#[test]
fn hr_test_reports_noiseless_rates() {
    let out = beamsteer(&["hr-test"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        let err: f64 = f[3].parse().unwrap();
        assert!(err.abs() <= 2.0, "{row}");
    }
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small(dir.path());
    let out_path = dir.path().join("sweep.csv");
    let out = beamsteer(&[
        "sweep",
        "-c",
        &cfg,
        "--steps",
        "2",
        "--snr",
        "0,20",
        "--policies",
        "adaptive,fixed:0",
        "--repeats",
        "2",
        "-o",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(&out_path).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(&rows[1][1], "fixed(0)");
    assert_eq!(rows[3][0].parse::<f64>().unwrap(), 20.0);
}

#[test]
fn validate_small_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small(dir.path());
    let report = dir.path().join("report.json");
    let out = beamsteer(&[
        "validate",
        "-c",
        &cfg,
        "--filter-seeds",
        "1",
        "--filter-steps",
        "4",
        "--particles",
        "5000",
        "--planner-trials",
        "3",
        "--draws",
        "50000",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(report).unwrap()).unwrap();
    assert_eq!(doc["planner"].as_array().unwrap().len(), 3);
}
