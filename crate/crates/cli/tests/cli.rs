use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn gridfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridfuse")).args(args).output().expect("binary runs")
}

fn run_into(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    gridfuse(&args)
}

fn metrics(dir: &Path) -> BTreeMap<String, String> {
    let text = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("metric,value"));
    lines.map(|l| l.split_once(',').unwrap()).map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn created(stdout: &[u8]) -> usize {
    let text = String::from_utf8_lossy(stdout);
    text.lines().find_map(|l| l.strip_prefix("created_metas=")).unwrap().parse().unwrap()
}

#[test]
fn nominal_run_succeeds_without_false_acceptances() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into(dir.path(), &["--scenario", "nominal_following"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = metrics(dir.path());
    assert_eq!(m["false_accepted"], "0");
    assert_eq!(m["gate_violations"], "0");
    for f in ["frames.jsonl", "confidence.jsonl", "plot/truth_1.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn missing_scenario_file_exits_2_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into(dir.path(), &["--scenario", "/no/such/scenario.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/no/such/scenario.json"), "{err}");
    let parsed: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(parsed["error"], "io");
}

#[test]
fn unknown_override_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into(dir.path(), &["--scenario", "nominal_following", "--override", "fusion.no_such_key=1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_scenario_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let dump = gridfuse(&["scenario", "nominal_following"]);
    let mut spec: serde_json::Value = serde_json::from_slice(&dump.stdout).unwrap();
    spec["duration"] = serde_json::json!(-1.0);
    std::fs::write(&path, spec.to_string()).unwrap();
    let out = run_into(&dir.path().join("o"), &["--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    std::fs::write(&path, "{ not json").unwrap();
    let out = run_into(&dir.path().join("o"), &["--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn stricter_gate_creates_no_more_metas() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let base = run_into(a.path(), &["--scenario", "roundabout_false_track", "--frames", "30"]);
    let strict = run_into(b.path(), &["--scenario", "roundabout_false_track", "--frames", "30", "--override", "fusion.eta_min=0.99"]);
    assert!(base.status.success() && strict.status.success());
    assert!(created(&strict.stdout) <= created(&base.stdout));
}

#[test]
fn identical_configuration_gives_identical_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--scenario", "innercity_ghost_occlusion", "--seed", "11", "--frames", "20", "--format", "csv"];
    assert!(run_into(a.path(), &args).status.success());
    assert!(run_into(b.path(), &args).status.success());
    for f in ["frames.jsonl", "confidence.jsonl", "metrics.csv", "frames.csv", "confidence.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path().join("plot")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in names {
        assert_eq!(std::fs::read(a.path().join("plot").join(&n)).unwrap(), std::fs::read(b.path().join("plot").join(&n)).unwrap());
    }
}

#[test]
fn scenario_file_runs_like_the_canned_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    std::fs::write(&path, gridfuse(&["scenario", "passing_vehicles"]).stdout).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run_into(&a, &["--scenario", "passing_vehicles", "--frames", "5"]).status.success());
    assert!(run_into(&b, &["--scenario", path.to_str().unwrap(), "--frames", "5"]).status.success());
    assert_eq!(std::fs::read(a.join("frames.jsonl")).unwrap(), std::fs::read(b.join("frames.jsonl")).unwrap());
}

#[test]
fn inspect_shows_rejections_and_ranges() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_into(dir.path(), &["--scenario", "roundabout_false_track", "--frames", "10"]).status.success());
    let log = dir.path().to_str().unwrap();
    let out = gridfuse(&["inspect", log, "--frame", "4"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("objects"));
    assert!(text.contains("action=rejected") && text.contains("eta_p="), "{text}");

    let jsonl = gridfuse(&["inspect", log, "--frame", "4", "--format", "jsonl"]);
    let frame: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&jsonl.stdout).lines().next().unwrap()).unwrap();
    assert_eq!(frame["frame"], 4);

    let out = gridfuse(&["inspect", log, "--frame", "500"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scenario_listing_names_all_canned() {
    let out = gridfuse(&["scenario"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for n in ["passing_vehicles", "roundabout_false_track", "innercity_ghost_occlusion", "nominal_following"] {
        assert!(text.lines().any(|l| l == n));
    }
}

#[test]
fn help_documents_exit_codes() {
    let out = gridfuse(&["run", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("Exit codes") && text.contains("GRIDFUSE_LOG"));
}
