use std::process::Command;

use serde_json::{json, Value};

use kis_core::corpus::load_manifest;
use kis_core::service::LogEvent;
use kis_core::sketch::{read_index_cache, ColorIndex, ColorIndexParams, SketchLevel, SketchQuery};
use kis_core::synthetic::{SyntheticCorpus, SyntheticSpec};

fn engine() -> Command {
    Command::new(env!("CARGO_BIN_EXE_engine"))
}

fn corpus_on_disk() -> (tempfile::TempDir, std::path::PathBuf, SyntheticCorpus) {
    let synth = SyntheticCorpus::generate(&SyntheticSpec {
        videos: 3,
        shots_per_video: 4,
        ..SyntheticSpec::default()
    });
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth.write(dir.path()).unwrap();
    (dir, manifest, synth)
}

#[test]
fn index_writes_a_loadable_cache() {
    let (dir, manifest, _) = corpus_on_disk();
    let out = engine()
        .args(["index", manifest.to_str().unwrap(), "--k", "5", "--no-recommend"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cache = dir.path().join("color_index.kisc");
    let corpus = load_manifest(&manifest).unwrap();
    let mut params = ColorIndexParams::default();
    params.extract.k = 5;
    let idx = read_index_cache(std::fs::File::open(&cache).unwrap(), &corpus, &params).unwrap();
    assert_eq!(idx.signatures(), ColorIndex::build(&corpus, &params).unwrap().signatures());
    assert!(idx.signatures().iter().all(|s| s.centroids.len() <= 5));
}

#[test]
fn harness_runs_a_planted_sketch_agent() {
    let (dir, manifest, synth) = corpus_on_disk();
    let target = synth.manifest.shots[7].id.clone();
    let tasks = synth.plant_tasks(&[&target], 20.0, 300.0);
    let corpus = load_manifest(&manifest).unwrap();
    let idx = ColorIndex::build(&corpus, &ColorIndexParams::default()).unwrap();
    let sketch = SketchQuery::from_signature(idx.signature(&target).unwrap(), SketchLevel::Frame);
    let agent = json!([
        {"at": 5.0, "op": "query", "body": {"sketch": sketch}},
        {"at": 9.0, "op": "submit_rank", "body": {"rank": 1}}
    ]);
    let tasks_path = dir.path().join("tasks.json");
    let agent_path = dir.path().join("agent.json");
    let report_path = dir.path().join("report.json");
    std::fs::write(&tasks_path, serde_json::to_vec(&tasks).unwrap()).unwrap();
    std::fs::write(&agent_path, agent.to_string()).unwrap();
    let out = engine()
        .arg("harness")
        .args([&manifest, &tasks_path, &agent_path])
        .arg("--out")
        .arg(&report_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("solved 1/1"), "{stdout}");
    let report: Value = serde_json::from_slice(&std::fs::read(&report_path).unwrap()).unwrap();
    assert_eq!(report["tasks"][0]["score"], 100.0 - 50.0 * 9.0 / 300.0);
    let log: Vec<LogEvent> = serde_json::from_value(report["tasks"][0]["log"].clone()).unwrap();
    assert_eq!(log.len(), 2);
}

#[test]
fn harness_rejects_unknown_operations() {
    let (dir, manifest, synth) = corpus_on_disk();
    let tasks = synth.plant_tasks(&[&synth.manifest.shots[0].id], 20.0, 300.0);
    let tasks_path = dir.path().join("tasks.json");
    let agent_path = dir.path().join("agent.json");
    std::fs::write(&tasks_path, serde_json::to_vec(&tasks).unwrap()).unwrap();
    std::fs::write(&agent_path, r#"[{"at": 0, "op": "teleport", "body": {}}]"#).unwrap();
    let out = engine()
        .arg("harness")
        .args([&manifest, &tasks_path, &agent_path])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("agent script"));
}

#[test]
fn harness_rejects_tasks_outside_the_corpus() {
    let (dir, manifest, synth) = corpus_on_disk();
    let mut tasks = synth.plant_tasks(&[&synth.manifest.shots[0].id], 20.0, 300.0);
    tasks[0].target_end_s = 1e6;
    let tasks_path = dir.path().join("tasks.json");
    let agent_path = dir.path().join("agent.json");
    std::fs::write(&tasks_path, serde_json::to_vec(&tasks).unwrap()).unwrap();
    std::fs::write(&agent_path, "[]").unwrap();
    let out = engine()
        .arg("harness")
        .args([&manifest, &tasks_path, &agent_path])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("task00"));
}
