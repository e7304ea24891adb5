//! Runs the `rdmi` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rdmi::commands::analyze_in_memory;
use rdmi::csv_io::read_dataset_file;
use rdmi::report::write_estimates;
use rdmi_core::datagen::{generate_trial, GenParams, Preset};
use rdmi_core::imputation::{ImputationConfig, Method};

fn rdmi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdmi"))
        .args(args)
        .env_remove("RDMI_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = rdmi(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: PathBuf) -> String {
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn small_sim(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "simulate",
        "--preset",
        "setting2",
        "--seed",
        "3",
        "--reps",
        "6",
        "--m-imputations",
        "4",
        "--truth-datasets",
        "50",
        "--out",
        s(out),
    ];
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn simulate_writes_the_output_set() {
    let dir = tempfile::tempdir().unwrap();
    small_sim(dir.path(), &["--workers", "2"]);
    let metrics = read(dir.path().join("metrics.csv"));
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "run_id,method,estimand,truth,mean_estimate,bias,ese,ase,cp,n_used,n_excluded,n_fallback,n_separation"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 12);
    for row in &rows {
        assert_eq!(row.len(), 13);
        let cp: f64 = row[8].parse().unwrap();
        assert!((0.0..=1.0).contains(&cp));
        assert_eq!(row[9].parse::<usize>().unwrap() + row[10].parse::<usize>().unwrap(), 6);
    }

    let manifest: serde_json::Value = serde_json::from_str(&read(dir.path().join("manifest.json"))).unwrap();
    assert_eq!(manifest["run_id"].as_str().unwrap(), rows[0][0]);
    assert_eq!(manifest["replicates"], 6);
    assert!(manifest.get("workers").is_none());

    let scen = read(dir.path().join("scenarios.csv"));
    assert_eq!(scen.lines().count(), 3);
    let truth = read(dir.path().join("truth.csv"));
    assert_eq!(truth.lines().nth(1).unwrap().split(',').nth(3), Some("50"));
}

#[test]
fn method_subset_and_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    small_sim(&a, &["--methods", "C,B", "--workers", "1"]);
    small_sim(&b, &["--methods", "B,C", "--workers", "3"]);
    let m = read(a.join("metrics.csv"));
    let methods: Vec<&str> = m.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(methods, ["B", "B", "B", "C", "C", "C"]);
    assert_eq!(m, read(b.join("metrics.csv")));
    assert_eq!(read(a.join("manifest.json")), read(b.join("manifest.json")));
}

#[test]
fn generated_data_round_trips_through_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("trial.csv");
    ok(&[
        "generate",
        "--preset",
        "setting2",
        "--seed",
        "21",
        "--out",
        s(&data_path),
    ]);
    let data = read_dataset_file(&data_path).unwrap();
    let direct = generate_trial(&GenParams::preset(Preset::Setting2), 21).unwrap();
    assert_eq!(data.subjects, direct.subjects);

    let out_dir = dir.path().join("analysis");
    let out = ok(&[
        "analyze",
        "--data",
        s(&data_path),
        "--seed",
        "9",
        "--m-imputations",
        "5",
        "--out",
        s(&out_dir),
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let run_id = stdout.lines().next().unwrap().strip_prefix("run ").unwrap().to_string();

    let template = ImputationConfig {
        m: 5,
        ..ImputationConfig::default()
    };
    let estimates = analyze_in_memory(&direct, &template, &Method::ALL, 9, 0.95).unwrap();
    let expect_dir = dir.path().join("expected");
    std::fs::create_dir(&expect_dir).unwrap();
    write_estimates(&expect_dir, &run_id, &estimates).unwrap();
    assert_eq!(
        read(out_dir.join("estimates.csv")),
        read(expect_dir.join("estimates.csv"))
    );

    let manifest: serde_json::Value = serde_json::from_str(&read(out_dir.join("manifest.json"))).unwrap();
    assert_eq!(manifest["input"]["subjects"], 400);
    assert_eq!(manifest["input"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn complete_data_gives_the_same_answer_for_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("complete.toml");
    std::fs::write(
        &cfg,
        "preset = \"setting1\"\n[params]\nwithdrawal_hazard = 0.0\np_miss_completer = 0.0\np_miss_retained_dropout = 0.0\n",
    )
    .unwrap();
    let data = dir.path().join("complete.csv");
    ok(&["generate", "--config", s(&cfg), "--seed", "2", "--out", s(&data)]);
    let out_dir = dir.path().join("out");
    ok(&[
        "analyze",
        "--data",
        s(&data),
        "--m-imputations",
        "3",
        "--out",
        s(&out_dir),
    ]);
    let est = read(out_dir.join("estimates.csv"));
    let rows: Vec<Vec<&str>> = est.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 12);
    for row in &rows {
        let twin = &rows[row_index(row[2])];
        assert_eq!(row[2..], twin[2..]);
        assert_eq!(row[9], "0.000000");
    }
}

fn row_index(estimand: &str) -> usize {
    ["control", "treatment", "difference"]
        .iter()
        .position(|&e| e == estimand)
        .unwrap()
}

#[test]
fn malformed_arm_is_an_input_error_with_its_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(
        &path,
        "id,arm,baseline,y12,y24,y36,y48,disc_week,withdraw_week,withdraw_type\n\
         a,0,8.1,-0.1,-0.2,-0.3,-0.4,,,\n\
         b,7,8.5,-0.1,-0.2,-0.3,-0.4,,,\n",
    )
    .unwrap();
    let out = rdmi(&["analyze", "--data", s(&path), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("row 3") && err.contains("arm"), "{err}");
}

#[test]
fn truth_with_a_single_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&[
        "truth",
        "--preset",
        "setting1",
        "--truth-datasets",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("(1 datasets)"));
    let truth = read(dir.path().join("truth.csv"));
    assert_eq!(truth.lines().count(), 4);
}

#[test]
fn config_errors_name_the_line_and_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "preset = \"setting2\"\n\n[imputation]\nm = 1\n").unwrap();
    let out = rdmi(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("bad.toml:4") && err.contains("imputation.m"), "{err}");

    std::fs::write(&cfg, "preset = \"setting2\"\n[params]\nkapa = 0.1\n").unwrap();
    let out = rdmi(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("bad.toml:3") && err.contains("kapa"), "{err}");
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(rdmi(&["simulate", "--methods", "A,E"]).status.code(), Some(1));
    assert_eq!(rdmi(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(rdmi(&["--help"]).status.code(), Some(0));
}
