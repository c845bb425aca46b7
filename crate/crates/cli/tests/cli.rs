use std::path::Path;
use std::process::{Command, Output};

fn bayesgame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bayesgame"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &Path) -> &str {
    dir.to_str().expect("utf-8 temp path")
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = bayesgame(&["run", "--case", "I", "--scenario", "A", "--out", out_arg(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trace.json", "metrics.json", "states.csv", "timings.json"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["schema_version"], 1);
    assert_eq!(metrics["run"]["collided"], false);
    let trace: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("trace.json")).unwrap()).unwrap();
    assert_eq!(trace["schema_version"], 1);
    let states = csv_rows(&dir.path().join("states.csv"));
    assert!(!states.is_empty());
}

#[test]
fn unknown_scenario_names_the_id() {
    let dir = tempfile::tempdir().unwrap();
    let out = bayesgame(&["run", "--case", "I", "--scenario", "Q", "--out", out_arg(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Q"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = bayesgame(&[
            "run", "--case", "II", "--scenario", "C", "--iters", "3000", "--seed", "5", "--workers", "1", "--steps", "4",
            "--out", out_arg(d.path()),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("trace.json")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn tiny_verify_budget_is_insufficient_not_failed() {
    let out = bayesgame(&["verify", "--iters", "10"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().find(|l| l.contains("estimator_consistency")).expect("consistency line");
    assert!(line.starts_with("[INSUFFICIENT]"), "{line}");
    assert!(line.contains("insufficient iterations"));
}

#[test]
fn default_verify_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bayesgame(&["verify", "--out", out_arg(dir.path())]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 4, "{stdout}");
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(doc["reports"].as_array().unwrap().len(), 4);
}

#[test]
fn sweep_summarizes_both_methods() {
    let dir = tempfile::tempdir().unwrap();
    let out = bayesgame(&["sweep", "--case", "I", "--repeats", "2", "--out", out_arg(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let runs = csv_rows(&dir.path().join("runs.csv"));
    assert_eq!(runs.len(), 16);
    assert!(runs.iter().all(|r| r[12].is_empty()), "a run failed");
    let summary = csv_rows(&dir.path().join("summary.csv"));
    let rate = |method: &str| -> f64 {
        let r = summary.iter().find(|r| &r[2] == method).expect("method row");
        assert_eq!(&r[10], "8");
        r[11].parse().unwrap()
    };
    assert_eq!(rate("bayes"), 0.0);
    assert!(rate("baseline") > 0.0);
}

#[test]
fn bench_has_a_row_per_method_and_budget() {
    let dir = tempfile::tempdir().unwrap();
    let out = bayesgame(&[
        "bench", "--case", "II", "--scenario", "A", "--budgets", "1000,2000,5000", "--repeats", "1", "--out",
        out_arg(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("bench.csv"));
    assert_eq!(rows.len(), 6);
    let methods: Vec<&str> = rows.iter().map(|r| r.get(3).unwrap()).collect();
    assert_eq!(methods, ["bayes", "bayes", "bayes", "baseline", "baseline", "baseline"]);
}

#[test]
fn bad_override_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bayesgame(&["run", "--case", "I", "--set", "no_such_field=1", "--out", out_arg(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}
