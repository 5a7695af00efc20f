use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_anomgen");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_spec(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = r#"{"n_timestamps": 2000, "seed": 5,
    "variables": [{"name": "x", "kind": "stochastic", "normal_range": [0, 1], "anomalous_range": [3, 4]}],
    "anomaly": {"mode": "event_count", "e": 4, "duration_range": [10, 30]}}"#;

#[test]
fn generate_writes_data_manifest_and_events() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "s.json", SMALL);
    let out = dir.path().join("d.csv");
    let o = run(&["generate", "--spec", s(&spec), "--out", s(&out), "--workers", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let data = fs::read_to_string(&out).unwrap();
    assert_eq!(data.lines().count(), 2001);
    assert!(data.starts_with("t,x,label\n"));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("d.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["event_count"], 4);
    assert_eq!(manifest["n_timestamps"], 2000);
    assert_eq!(manifest["variables"][0], "x");

    let events = fs::read_to_string(dir.path().join("d.events.csv")).unwrap();
    assert_eq!(events.lines().count(), 5);
    let leftovers: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".partial"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn generate_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "s.json", SMALL);
    let out = dir.path().join("d.csv");
    let args = ["generate", "--spec", s(&spec), "--out", s(&out)];
    assert!(run(&args).status.success());
    let first = fs::read(&out).unwrap();
    assert!(run(&args).status.success());
    assert_eq!(first, fs::read(&out).unwrap());
}

#[test]
fn split_labels_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "s.json", SMALL);
    let out = dir.path().join("d.csv");
    let o = run(&["generate", "--spec", s(&spec), "--out", s(&out), "--split-labels"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(&out).unwrap().starts_with("t,x\n"));
    let labels = fs::read_to_string(dir.path().join("d.labels.csv")).unwrap();
    assert_eq!(labels.lines().next(), Some("label"));
    assert_eq!(labels.lines().count(), 2001);
}

#[test]
fn validate_reports_all_errors() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "bad.json",
        r#"{"n_timestamps": 100, "seed": 1,
            "variables": [{"name": "x", "kind": "stochastic", "normal_range": [5, 1], "anomalous_range": [0, 1]}],
            "anomaly": {"mode": "point_count", "k": 500, "duration_range": [1, 5]}}"#,
    );
    let o = run(&["validate", "--spec", s(&spec)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("normal_range"), "{err}");
    assert!(err.contains("k exceeds n_timestamps"), "{err}");

    let good = write_spec(dir.path(), "good.json", SMALL);
    let o = run(&["validate", "--spec", s(&good)]);
    assert!(o.status.success());
}

#[test]
fn malformed_json_and_usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "s.json", "{\"n_timestamps\": ");
    assert_eq!(run(&["validate", "--spec", s(&spec)]).status.code(), Some(2));
    assert_eq!(run(&["generate", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn missing_spec_is_io_error() {
    let o = run(&["validate", "--spec", "/nonexistent/spec.json"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn callbacks_cannot_run_from_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "cb.json",
        r#"{"n_timestamps": 10, "seed": 1,
            "variables": [{"name": "c", "kind": "callback", "registry_key": "mine"}],
            "anomaly": {"mode": "frequency", "f": 0, "duration_range": [1, 1]}}"#,
    );
    let o = run(&["generate", "--spec", s(&spec), "--out", s(&dir.path().join("o.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mine"));
    assert!(!dir.path().join("o.csv").exists());
}

#[test]
fn refuses_to_overwrite_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "s.json", SMALL);
    let o = run(&["generate", "--spec", s(&spec), "--out", s(&spec)]);
    assert_ne!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(&spec).unwrap(), SMALL);
}

#[test]
fn stats_matches_generated_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "s.json", SMALL);
    let o = run(&["stats", "--spec", s(&spec)]);
    assert!(o.status.success());
    let stats: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let out = dir.path().join("d.csv");
    assert!(run(&["generate", "--spec", s(&spec), "--out", s(&out)]).status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("d.manifest.json")).unwrap()).unwrap();
    assert_eq!(stats["event_count"], manifest["event_count"]);
    assert_eq!(stats["anomalous_points"], manifest["anomalous_points"]);
}

#[test]
fn score_event_recall_five_of_six() {
    let dir = tempfile::tempdir().unwrap();
    let n = 700;
    let starts: Vec<usize> = (0..6).map(|i| i * 100 + 10).collect();
    let truth: Vec<u8> = (0..n).map(|t| starts.iter().any(|&s| (s..s + 20).contains(&t)) as u8).collect();
    let pred: Vec<u8> = (0..n).map(|t| starts[..5].iter().any(|&s| t == s + 7) as u8).collect();
    let col = |v: &[u8]| std::iter::once("label".to_string()).chain(v.iter().map(u8::to_string)).collect::<Vec<_>>().join("\n") + "\n";
    fs::write(dir.path().join("truth.csv"), col(&truth)).unwrap();
    fs::write(dir.path().join("pred.csv"), col(&pred)).unwrap();
    let events: String = std::iter::once("start,length".to_string())
        .chain(starts.iter().map(|s| format!("{s},20")))
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(dir.path().join("events.csv"), events + "\n").unwrap();

    let o = run(&[
        "score",
        "--pred",
        s(&dir.path().join("pred.csv")),
        "--truth",
        s(&dir.path().join("truth.csv")),
        "--events",
        s(&dir.path().join("events.csv")),
        "--beta",
        "1,0.1,2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["events_detected"], 5);
    assert_eq!(r["events_total"], 6);
    assert!((r["event_recall"].as_f64().unwrap() - 5.0 / 6.0).abs() < 1e-12);
    assert_eq!(r["precision"], 1.0);
    assert_eq!(r["tp"], 5);
    assert_eq!(r["fn"], 115);
    assert!(r["f_beta"]["2"].is_number());
}

#[test]
fn score_length_mismatch_fails() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.csv"), "label\n0\n1\n").unwrap();
    fs::write(dir.path().join("b.csv"), "label\n0\n").unwrap();
    let o = run(&["score", "--pred", s(&dir.path().join("a.csv")), "--truth", s(&dir.path().join("b.csv"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn plot_is_deterministic_svg() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "s.json", SMALL);
    let data = dir.path().join("d.csv");
    assert!(run(&["generate", "--spec", s(&spec), "--out", s(&data)]).status.success());
    let a = dir.path().join("a.svg");
    let b = dir.path().join("b.svg");
    assert!(run(&["plot", "--data", s(&data), "--out", s(&a)]).status.success());
    assert!(run(&["plot", "--data", s(&data), "--out", s(&b)]).status.success());
    let svg = fs::read_to_string(&a).unwrap();
    assert_eq!(svg, fs::read_to_string(&b).unwrap());
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("class=\"anomaly\"").count(), 4);

    let o = run(&["plot", "--data", s(&data), "--out", s(&a), "--vars", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}
