use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nnrl(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nnrl"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn record(out: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&out.stdout).trim()).expect("stdout is one JSON record")
}

const MOMENT: &str = r#"schema = "nnrl.manifest/1"
kind = "moment-check"
seed = 11

[params]
d = 4
k = 1

[budget]
n = 1000
"#;

#[test]
fn validate_prints_canonical_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "m.toml", MOMENT);
    let out = nnrl(&["validate", &path], &[]);
    assert_eq!(out.status.code(), Some(0));
    let canonical = String::from_utf8(out.stdout).unwrap();
    let again = write(dir.path(), "again.toml", &canonical);
    let out = nnrl(&["validate", &again], &[]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), canonical);
}

#[test]
fn invalid_manifests_exit_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", &MOMENT.replace("d = 4", "d = 400"));
    let out = nnrl(&["validate", &bad], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.d"));
    let no_seed = write(dir.path(), "noseed.toml", &MOMENT.replace("seed = 11\n", ""));
    let out = nnrl(&["run", &no_seed], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
    let capped = write(dir.path(), "capped.toml", MOMENT);
    let out = nnrl(&["validate", &capped], &[("NNRL_MAX_N", "100")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget.n"));
}

#[test]
fn moment_check_passes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "m.toml", MOMENT);
    let out_dir = dir.path().join("out");
    let first = nnrl(&["run", &path, "--out", out_dir.to_str().unwrap()], &[]);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let a = record(&first);
    assert_eq!(a["schema"], "nnrl.record/1");
    assert_eq!(a["status"], "passed");
    assert!(a["metrics"]["max_abs_diff"].as_f64().unwrap() <= 1e-10);
    assert_eq!(a["verdicts"].as_array().unwrap().len(), 1);
    let written: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("record.json")).unwrap()).unwrap();
    assert_eq!(written["metrics"], a["metrics"]);
    fs::remove_dir_all(&out_dir).unwrap();
    let second = record(&nnrl(&["run", &path, "--out", out_dir.to_str().unwrap()], &[]));
    assert_eq!(a["metrics"].to_string(), second["metrics"].to_string());
    assert_eq!(a["manifest"], second["manifest"]);
}

#[test]
fn seed_flag_overrides_and_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "m.toml", MOMENT);
    let r = record(&nnrl(&["run", &path, "--seed", "99"], &[]));
    assert_eq!(r["manifest"]["seed"], 99);
}

#[test]
fn failing_threshold_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{MOMENT}\n[thresholds]\nmax_abs_diff = -1.0\n");
    let path = write(dir.path(), "m.toml", &text);
    let out = nnrl(&["run", &path], &[]);
    assert_eq!(out.status.code(), Some(1));
    let r = record(&out);
    assert_eq!(r["status"], "failed");
    assert_eq!(r["verdicts"][0]["pass"], false);
}

#[test]
fn rank_deficient_rl_det_fails_naming_level_and_stage() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"schema = "nnrl.manifest/1"
kind = "rl-det"
seed = 3

[params]
rank_deficient = true

[budget]
n = 50000
"#;
    let path = write(dir.path(), "m.toml", text);
    let out = nnrl(&["run", &path], &[]);
    assert_eq!(out.status.code(), Some(1));
    let r = record(&out);
    assert_eq!(r["status"], "failed");
    assert_eq!(r["error"]["stage"], "learner");
    assert_eq!(r["error"]["level"], 2);
    assert_eq!(r["verdicts"][0]["value"], Value::Null);
}

#[test]
fn poly_generative_uses_exact_budget() {
    let dir = tempfile::tempdir().unwrap();
    let text = "schema = \"nnrl.manifest/1\"\nkind = \"poly-generative\"\nseed = 0\n";
    let path = write(dir.path(), "m.toml", text);
    let out = nnrl(&["run", &path], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = record(&out);
    assert_eq!(r["metrics"]["queries"].as_f64(), Some(12.0));
}

const SWEEP: &str = r#"schema = "nnrl.sweep/1"

[template]
schema = "nnrl.manifest/1"
kind = "moment-check"
seed = 0

[template.params]
d = 3

[grid]
"budget.n" = [50, 100]
seed = [1, 2, 3]
"#;

#[test]
fn sweep_writes_points_records_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "s.toml", SWEEP);
    let out_dir = dir.path().join("sweep");
    let out = nnrl(&["sweep", &spec, "--out", out_dir.to_str().unwrap(), "--workers", "2"], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = fs::read_to_string(out_dir.join("records.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 6);
    assert_eq!(fs::read_dir(out_dir.join("points")).unwrap().count(), 6);
    let summary = fs::read_to_string(out_dir.join("summary.tsv")).unwrap();
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("budget.n=50\t3\t3\t1.000"));

    let first: Vec<Value> = lines.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    fs::remove_dir_all(&out_dir).unwrap();
    nnrl(&["sweep", &spec, "--out", out_dir.to_str().unwrap()], &[]);
    let again = fs::read_to_string(out_dir.join("records.jsonl")).unwrap();
    for (a, b) in first.iter().zip(again.lines()) {
        let b: Value = serde_json::from_str(b).unwrap();
        assert_eq!(a["metrics"].to_string(), b["metrics"].to_string());
    }

    let report = nnrl(&["report", out_dir.join("records.jsonl").to_str().unwrap()], &[]);
    assert_eq!(report.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&report.stdout).lines().count(), 3);
}

#[test]
fn empty_grid_is_a_successful_empty_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let text = SWEEP.replace("\"budget.n\" = [50, 100]\nseed = [1, 2, 3]\n", "");
    let spec = write(dir.path(), "s.toml", &text);
    let out_dir = dir.path().join("sweep");
    let out = nnrl(&["sweep", &spec, "--out", out_dir.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read_to_string(out_dir.join("records.jsonl")).unwrap(), "");
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 1);
}

#[test]
fn grid_cap_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "s.toml", SWEEP);
    let out_dir = dir.path().join("sweep");
    let out = nnrl(&["sweep", &spec, "--out", out_dir.to_str().unwrap()], &[("NNRL_MAX_GRID", "4")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cap"));
}
