use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mergesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mergesim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = mergesim(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn generate(dir: &Path, scenario: &str, n: usize, seed: u64) {
    let (n, seed) = (n.to_string(), seed.to_string());
    ok(&[
        "generate",
        "--scenario",
        scenario,
        "--n",
        &n,
        "--seed",
        &seed,
        "--out",
        dir.to_str().unwrap(),
    ]);
}

fn event_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".event.json"))
        .collect();
    names.sort();
    names
}

#[test]
fn generate_is_deterministic_and_passes_filters() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    generate(&a, "overtaking_merge", 6, 9);
    generate(&b, "overtaking_merge", 6, 9);
    let names = event_files(&a);
    assert_eq!(names.len(), 6);
    assert!(a.join("manifest.json").exists());
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap());
    }
    let report = tmp.path().join("filter.json");
    ok(&[
        "filter",
        a.to_str().unwrap(),
        "--strict",
        "--out",
        report.to_str().unwrap(),
    ]);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(json["valid"].as_u64(), Some(6), "{json}");
}

#[test]
fn simulate_writes_one_row_per_step() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path(), "standard_merge", 1, 0);
    let event = tmp.path().join(&event_files(tmp.path())[0]);
    let csv = tmp.path().join("out.csv");
    let out = ok(&[
        "simulate",
        event.to_str().unwrap(),
        "--model",
        "IDM_CAH",
        "--window",
        "2:10",
        "--out",
        csv.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("time,speed_sim,speed_raw,accel,state,fallback")
    );
    assert_eq!(lines.count(), 81);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["theil_u"].as_f64().is_some(), "{summary}");
}

#[test]
fn missing_event_exits_with_parse_code() {
    let out = mergesim(&["simulate", "/nonexistent/e.event.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn strict_rejects_filtered_events() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path(), "standard_merge", 2, 0);
    let name = &event_files(tmp.path())[0];
    let path = tmp.path().join(name);
    let mut json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    json["interaction_start"] = json["merge_time"].as_f64().map(|m| m + 1.0).into();
    fs::write(&path, json.to_string()).unwrap();

    let out = mergesim(&["simulate", path.to_str().unwrap(), "--strict"]);
    assert_eq!(out.status.code(), Some(4));
    let out = mergesim(&["filter", tmp.path().to_str().unwrap(), "--strict"]);
    assert_eq!(out.status.code(), Some(4));
    // Without --strict the same event still simulates.
    let csv = tmp.path().join("loose.csv");
    ok(&[
        "simulate",
        path.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
}

fn fit(corpus: &Path, out: &Path, seed: &str, jobs: &str) {
    ok(&[
        "fit",
        corpus.to_str().unwrap(),
        "--model",
        "IDM,MR_IDM",
        "--seed",
        seed,
        "--jobs",
        jobs,
        "--out",
        out.to_str().unwrap(),
    ]);
}

#[test]
fn fit_is_reproducible_across_runs_and_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    generate(&corpus, "standard_merge", 5, 20);
    let runs = [("r1", "1"), ("r2", "1"), ("r8", "8")];
    for (dir, jobs) in runs {
        fit(&corpus, &tmp.path().join(dir), "3", jobs);
    }
    let read = |dir: &str, f: &str| fs::read(tmp.path().join(dir).join(f)).unwrap();

    let fits = String::from_utf8(read("r1", "fits.csv")).unwrap();
    assert_eq!(fits.lines().count(), 1 + 10);
    let summary = String::from_utf8(read("r1", "summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2);
    for f in ["fits.csv", "summary.csv", "fits.json", "summary.json"] {
        assert_eq!(read("r1", f), read("r2", f), "{f} differs between runs");
        assert_eq!(read("r1", f), read("r8", f), "{f} differs with 8 workers");
    }

    let overlays = tmp.path().join("overlays");
    let fits_json = tmp.path().join("r1").join("fits.json");
    ok(&[
        "report",
        corpus.to_str().unwrap(),
        "--fits",
        fits_json.to_str().unwrap(),
        "--out",
        overlays.to_str().unwrap(),
    ]);
    assert_eq!(fs::read_dir(&overlays).unwrap().count(), 5);
}
