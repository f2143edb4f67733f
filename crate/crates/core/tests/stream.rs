mod common;

use std::fs;
use std::path::Path;

use skr_core::harness::{HarnessError, RunConfig, Runner, Task};

fn run(cfg: RunConfig, root: &Path) -> skr_core::harness::MetricsReport {
    Runner::new(cfg, root).unwrap().run().unwrap()
}

fn read(root: &Path, run_id: &str, rel: &str) -> Vec<u8> {
    fs::read(root.join("runs").join(run_id).join(rel)).unwrap()
}

#[test]
fn oracle_with_full_window_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(common::oracle_config("full", "all", None), dir.path());
    assert_eq!(r.aa, 1.0);
    assert_eq!(r.bwt, Some(0.0));
    assert_eq!(r.fwt, Some(0.0));
    assert!(r.matrix.is_complete());
    assert_eq!(r.fallbacks, 0);
    for m in &r.memory {
        assert_eq!((m.a, m.real, m.pseudo), (5, 4, 1));
    }
}

#[test]
fn current_window_forgets_everything_earlier() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(common::oracle_config("current", "current", Some("exact")), dir.path());
    assert_eq!(r.bwt, Some(-1.0));
    assert_eq!(r.fwt, Some(0.0));
    assert!((r.aa - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn seen_window_matches_full_window_at_the_end() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(common::oracle_config("seen", "seen", Some("exact")), dir.path());
    assert_eq!((r.aa, r.bwt, r.fwt), (1.0, Some(0.0), Some(0.0)));
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(common::oracle_config("same", "all", None), a.path());
    run(common::oracle_config("same", "all", None), b.path());
    for rel in [
        "matrix.json",
        "report.txt",
        "memory/task1/a.jsonl",
        "memory/task2/b.jsonl",
        "memory/task3/b.jsonl",
        "stage/task3/build.jsonl",
    ] {
        assert_eq!(read(a.path(), "same", rel), read(b.path(), "same", rel), "{rel}");
    }
}

#[test]
fn resumes_from_a_partial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    run(common::oracle_config("resume", "current", Some("exact")), dir.path());
    let full = read(dir.path(), "resume", "matrix.json");
    let cp_path = dir.path().join("runs/resume/checkpoint.json");
    let mut cp: serde_json::Value = serde_json::from_slice(&fs::read(&cp_path).unwrap()).unwrap();
    cp["steps_done"] = 1.into();
    for row in cp["matrix"]["acc"].as_array_mut().unwrap() {
        for j in 2..row.as_array().unwrap().len() {
            row[j] = serde_json::Value::Null;
        }
    }
    cp["memory"].as_array_mut().unwrap().truncate(1);
    fs::write(&cp_path, serde_json::to_vec(&cp).unwrap()).unwrap();
    fs::remove_file(dir.path().join("runs/resume/matrix.json")).unwrap();
    run(common::oracle_config("resume", "current", Some("exact")), dir.path());
    assert_eq!(read(dir.path(), "resume", "matrix.json"), full);
}

#[test]
fn changed_config_is_not_resumed() {
    let dir = tempfile::tempdir().unwrap();
    run(common::oracle_config("guard", "all", None), dir.path());
    let mut cfg = common::oracle_config("guard", "all", None);
    cfg.seed += 1;
    let err = Runner::new(cfg, dir.path()).unwrap().run().unwrap_err();
    assert!(matches!(err, HarnessError::Config(_)), "{err}");
}

#[test]
fn garbage_filter_replies_fall_back_to_the_full_schema() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::oracle_config("garbage", "all", None);
    cfg.backend.schema_filter = skr_core::harness::RoleSpec::Garbage;
    let r = run(cfg, dir.path());
    // 3 baselines plus 1 + 2 + 3 evaluations of 4 test samples each
    assert_eq!(r.fallbacks, 9 * 4);
    assert_eq!(r.aa, 1.0);
}

#[test]
fn stage_files_hold_current_rows_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    run(common::oracle_config("stages", "all", None), dir.path());
    let text = String::from_utf8(read(dir.path(), "stages", "stage/task3/filter.jsonl")).unwrap();
    let rows: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 8 + 5 + 5);
    let tasks: Vec<u64> = rows.iter().map(|r| r["task"].as_u64().unwrap()).collect();
    assert!(tasks[..8].iter().all(|&t| t == 3));
    assert!(tasks[8..13].iter().all(|&t| t == 1));
    assert!(tasks[13..].iter().all(|&t| t == 2));
    let build = String::from_utf8(read(dir.path(), "stages", "stage/task2/build.jsonl")).unwrap();
    assert_eq!(build.lines().count(), 8 + 5);
    assert!(build.contains("relevant schema:"));
}

#[test]
fn adjacent_tasks_must_differ_in_knowledge_type() {
    let tasks = common::toy_tasks();
    let same: Vec<Task> = vec![tasks[0].clone(), tasks[0].clone()];
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::oracle_config("homog", "all", None);
    assert!(Runner::from_tasks(cfg.clone(), same.clone(), dir.path()).is_err());
    let mut lax = cfg;
    lax.strict_heterogeneity = false;
    assert!(Runner::from_tasks(lax, same, dir.path()).is_ok());
}

#[test]
fn corrupted_oracle_scores_zero_in_exact_mode() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::oracle_config("noisy", "all", Some("exact"));
    cfg.oracle.p = 1.0;
    let r = run(cfg, dir.path());
    assert_eq!(r.aa, 0.0);
}
