mod common;

use proptest::prelude::*;
use skr_core::harness::{build_memory, MemoryConfig, SynthesisSettings};
use skr_core::memory::{cluster_select, cluster_vectors, ClusterConfig, HashEmbedder, MemoryError, Origin};

#[test]
fn default_budgets() {
    for (i, task) in common::toy_tasks().iter().enumerate() {
        let bank = common::default_bank(task, i + 1, 7);
        assert_eq!(bank.a.len(), 5, "{}", task.name);
        assert_eq!(bank.real_count(), 4, "{}", task.name);
        assert_eq!(bank.pseudo_count(), 1, "{}", task.name);
        assert!(bank.b.iter().take(4).all(|e| e.origin == Origin::Real));
        let ids: std::collections::BTreeSet<_> = bank.a.iter().map(|e| &e.id).collect();
        assert_eq!(ids.len(), 5, "schema memory repeats a sample");
    }
}

#[test]
fn identical_seeds_give_identical_files() {
    for (i, task) in common::toy_tasks().iter().enumerate() {
        let a = common::persisted(&common::default_bank(task, i + 1, 42));
        let b = common::persisted(&common::default_bank(task, i + 1, 42));
        assert_eq!(a, b, "{}", task.name);
    }
}

#[test]
fn banks_round_trip_through_disk() {
    let task = &common::toy_tasks()[0];
    let bank = common::default_bank(task, 1, 3);
    let dir = tempfile::tempdir().unwrap();
    bank.save(dir.path()).unwrap();
    assert_eq!(skr_core::memory::MemoryBank::load(dir.path(), 1).unwrap(), bank);
}

#[test]
fn oversized_memory_is_clamped() {
    let task = &common::toy_tasks()[1];
    let cfg = MemoryConfig {
        a: 50,
        b: 50,
        ratio: [4, 1],
    };
    let (bank, summary) = build_memory(
        task,
        2,
        &cfg,
        &SynthesisSettings::default(),
        0,
        &common::mock_router(),
        &HashEmbedder,
    )
    .unwrap();
    assert_eq!(bank.a.len(), task.train.len());
    assert_eq!(summary.real, task.train.len());
    assert_eq!(summary.pseudo_target, 10);
}

#[test]
fn medoids_match_exhaustive_search() {
    let mut rng = common::rng(2024);
    for _ in 0..100 {
        let (keys, points, k) = common::cluster_instance(&mut rng);
        let c = cluster_vectors(&keys, &points, &ClusterConfig::new(k)).unwrap();
        for cl in 0..k {
            assert!(!c.members(cl).is_empty(), "empty cluster");
        }
        assert_eq!(c.medoids, common::oracle_medoids(&keys, &points, &c.assignment, k));
    }
}

#[test]
fn tied_members_resolve_to_smallest_key() {
    let keys: Vec<String> = ["c", "a", "b"].iter().map(|s| s.to_string()).collect();
    let points = vec![vec![1.0, 0.0]; 3];
    let c = cluster_vectors(&keys, &points, &ClusterConfig::new(1)).unwrap();
    assert_eq!(c.medoids, vec![1]);
}

#[test]
fn bad_cluster_counts() {
    let keys = vec!["a".to_string()];
    let points = vec![vec![1.0]];
    assert!(matches!(
        cluster_vectors(&keys, &points, &ClusterConfig::new(2)),
        Err(MemoryError::TooManyClusters { .. })
    ));
    assert!(matches!(
        cluster_vectors(&keys, &points, &ClusterConfig::new(0)),
        Err(MemoryError::ZeroClusters)
    ));
    assert!(matches!(
        cluster_vectors(&[], &[], &ClusterConfig::new(1)),
        Err(MemoryError::Empty)
    ));
}

proptest! {
    #[test]
    fn selection_is_a_distinct_subset(texts in prop::collection::vec("[a-e]{1,3}( [a-e]{1,3}){0,3}", 1..20), k in 1usize..6) {
        let samples: Vec<(String, usize)> = texts.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        let k = k.min(samples.len());
        let picked = cluster_select(&samples, &HashEmbedder, &ClusterConfig::new(k)).unwrap();
        prop_assert_eq!(picked.len(), k);
        let distinct: std::collections::BTreeSet<_> = picked.iter().collect();
        prop_assert_eq!(distinct.len(), k);
        let again = cluster_select(&samples, &HashEmbedder, &ClusterConfig::new(k)).unwrap();
        prop_assert_eq!(picked, again);
    }
}
