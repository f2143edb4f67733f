mod common;

use std::collections::BTreeSet;

use skr_core::backend::{GarbageGenerator, Role, Router, TemplateQuestion};
use skr_core::synthesis::{synthesize_memory, ComposeMode, StructurePool, SynthesisConfig};

#[test]
fn retained_samples_execute_and_are_novel() {
    for task in common::toy_tasks() {
        let report = common::synthesize_attempts(&task, 200, ComposeMode::Rule, 11);
        assert_eq!(report.attempts, 200);
        assert!(!report.samples.is_empty(), "{}: nothing retained", task.name);
        let bad = common::audit_samples(&task, &report);
        assert!(bad.is_empty(), "{}:\n{}", task.name, bad.join("\n"));
        let queries: BTreeSet<&str> = report.samples.iter().map(|s| s.query.as_str()).collect();
        assert_eq!(queries.len(), report.samples.len(), "duplicate queries retained");
    }
}

#[test]
fn generator_mode_matches_rule_mode_with_the_rule_backend() {
    let task = &common::toy_tasks()[0];
    let rule = common::synthesize_attempts(task, 64, ComposeMode::Rule, 5);
    let generator = common::synthesize_attempts(task, 64, ComposeMode::Generator, 5);
    let q = |r: &skr_core::synthesis::SynthesisReport| r.samples.iter().map(|s| s.query.clone()).collect::<Vec<_>>();
    assert_eq!(q(&rule), q(&generator));
}

#[test]
fn same_seed_same_samples() {
    let task = &common::toy_tasks()[1];
    let a = common::synthesize_attempts(task, 100, ComposeMode::Rule, 3);
    let b = common::synthesize_attempts(task, 100, ComposeMode::Rule, 3);
    assert_eq!(
        serde_json::to_string(&a.samples).unwrap(),
        serde_json::to_string(&b.samples).unwrap()
    );
}

#[test]
fn garbage_structures_are_rejected_not_fatal() {
    let task = &common::toy_tasks()[0];
    let router = Router::new()
        .bind(Role::QuestionGenerator, std::sync::Arc::new(TemplateQuestion))
        .bind(Role::StructureSynthesizer, std::sync::Arc::new(GarbageGenerator));
    let mut cfg = SynthesisConfig::new(3, ComposeMode::Generator, 1);
    cfg.max_attempts = Some(40);
    let r = synthesize_memory(&StructurePool::from_task(task), &router, &cfg).unwrap();
    assert!(r.samples.is_empty());
    assert!(r.exhausted);
    assert_eq!(r.rejected.compose, 40);
}

#[test]
fn target_stops_the_loop() {
    let task = &common::toy_tasks()[2];
    let pool = StructurePool::from_task(task);
    let cfg = SynthesisConfig::new(2, ComposeMode::Rule, 9);
    let r = synthesize_memory(&pool, &common::mock_router(), &cfg).unwrap();
    assert_eq!(r.samples.len(), 2);
    assert!(!r.exhausted);
}
