//! One line per acceptance criterion, then a single assertion over all of them.

mod common;

use std::time::{Duration, Instant};

use skr_core::backend::prompt::synthesize_prompt;
use skr_core::exec::{execute, result_equal, ExecOutcome, Store};
use skr_core::harness::{compute_metrics, AccuracyMatrix, MetricsReport, RoleSpec, Runner};
use skr_core::memory::{cluster_vectors, ClusterConfig};
use skr_core::query::{fill_schema, parse_query, parse_skeleton, skeletonize};
use skr_core::synthesis::{compose_rule, ComposeMode};
use skr_core::Language;

const METRIC_TOL: f64 = 1e-12;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let t = Instant::now();
    let mut o = f();
    let took = t.elapsed();
    o.detail = format!("{} ({:.2}s, limit {}s)", o.detail, took.as_secs_f64(), limit.as_secs());
    o.pass &= took <= limit;
    o
}

fn run(cfg: skr_core::harness::RunConfig) -> MetricsReport {
    let dir = tempfile::tempdir().unwrap();
    Runner::new(cfg, dir.path()).unwrap().run().unwrap()
}

fn golden() -> Outcome {
    let blocks = common::golden_blocks();
    let bad: Vec<_> = blocks
        .iter()
        .filter(|(_, want, got)| want != got)
        .map(|(f, _, _)| f.clone())
        .collect();
    outcome(
        blocks.len() == 8 && bad.is_empty(),
        format!("{}/8 blocks byte-identical {bad:?}", blocks.len() - bad.len()),
    )
}

fn round_trip() -> Outcome {
    let mut checked = 0;
    let mut failures = 0;
    let mut langs = std::collections::BTreeSet::new();
    for c in common::skeleton_cases() {
        langs.insert(c.skeleton.language());
        for seed in 0..8 {
            checked += 1;
            match fill_schema(&c.skeleton, &c.schema, c.store.as_ref(), seed) {
                Ok(f) if skeletonize(&f).text() == c.skeleton.text() => {}
                _ => failures += 1,
            }
        }
    }
    outcome(
        checked >= 500 && failures == 0 && langs.len() == 4,
        format!("{checked} cases over {} languages, {failures} failures", langs.len()),
    )
}

fn composition() -> Outcome {
    let compose = |a: &str, b: &str, lang| {
        compose_rule(&parse_skeleton(a, lang).unwrap(), &parse_skeleton(b, lang).unwrap())
            .map(|s| s.text())
            .unwrap_or_default()
    };
    let kg = compose("(ARGMAX [T1] [C1])", "(AND [T1] (JOIN [C1] [E1]))", Language::Sexpr);
    let sql = compose(
        "SELECT [C1] FROM [T1] WHERE [C2] = [V1]",
        "SELECT [C1] FROM [T] WHERE [C3] IN [V1]",
        Language::Sql,
    );
    let prompt = synthesize_prompt("(ARGMAX [T1] [C1])", "(AND [T1] (JOIN [C1] [E1]))");
    let want_prompt = "You are an expert in logical query expression synthesis. Your task is to merge two simple \
query skeletons into a single, more complex skeleton that logically integrates their structure and meaning. The \
result should preserve the semantics of both inputs and follow the same structural style and syntax. Output only \
the composed skeleton. Do not include any explanation or additional text.\n\nSimple skeleton 1:(ARGMAX [T1] [C1])\n\n\
Simple skeleton 2:(AND [T1] (JOIN [C1] [E1]))\n\nComposed skeleton:\n";
    let ok = [
        kg == "(ARGMAX (AND [T1] (JOIN [C1] [E1])) [C2])",
        sql == "SELECT * FROM [T1] WHERE [C1] IN (SELECT [C2] FROM [T2] WHERE [C3] = [V1])",
        prompt == want_prompt,
    ];
    outcome(
        ok.iter().all(|&b| b),
        format!("kg {} sql {} prompt {}", ok[0], ok[1], ok[2]),
    )
}

fn synthesis() -> Outcome {
    let mut retained = 0;
    let mut bad = 0;
    for task in common::toy_tasks() {
        let r = common::synthesize_attempts(&task, 200, ComposeMode::Rule, 11);
        retained += r.samples.len();
        bad += common::audit_samples(&task, &r).len();
    }
    outcome(
        retained > 0 && bad == 0,
        format!("600 attempts, {retained} retained, {bad} invalid or already in pool"),
    )
}

fn sql_oracle() -> Outcome {
    let mut total = 0;
    let mut bad = 0;
    for seed in 0..10 {
        let mut rng = common::rng(seed);
        let toy = common::Toy::random(&mut rng);
        let schema = toy.schema();
        let store = Store::Relational(toy.store());
        for _ in 0..25 {
            let case = common::random_case(&toy, &mut rng);
            total += 1;
            let agree = parse_query(&case.sql, Language::Sql, &schema).is_ok_and(|ast| {
                result_equal(
                    &execute(&ast, Some(&store), &schema),
                    &ExecOutcome::from_rows(case.rows.clone()),
                    case.ordered,
                )
            });
            bad += usize::from(!agree);
        }
    }
    outcome(
        total >= 200 && bad == 0,
        format!("{total} queries, {bad} disagreements"),
    )
}

fn memory_budgets() -> Outcome {
    let mut ok = true;
    let mut seen = Vec::new();
    for (i, task) in common::toy_tasks().iter().enumerate() {
        let bank = common::default_bank(task, i + 1, 7);
        ok &= bank.a.len() == 5 && bank.real_count() == 4 && bank.pseudo_count() == 1;
        ok &= common::persisted(&bank) == common::persisted(&common::default_bank(task, i + 1, 7));
        seen.push(format!(
            "{}/{}+{}",
            bank.a.len(),
            bank.real_count(),
            bank.pseudo_count()
        ));
    }
    outcome(ok, format!("budgets {} and identical bytes per seed", seen.join(" ")))
}

fn medoids() -> Outcome {
    let mut rng = common::rng(2024);
    let mut bad = 0;
    let n = 60;
    for _ in 0..n {
        let (keys, points, k) = common::cluster_instance(&mut rng);
        let c = cluster_vectors(&keys, &points, &ClusterConfig::new(k)).unwrap();
        bad += usize::from(c.medoids != common::oracle_medoids(&keys, &points, &c.assignment, k));
    }
    let keys: Vec<String> = ["c", "a", "b"].iter().map(|s| s.to_string()).collect();
    let tie = cluster_vectors(&keys, &vec![vec![1.0, 0.0]; 3], &ClusterConfig::new(1)).unwrap();
    let tie_ok = tie.medoids == vec![1];
    outcome(
        bad == 0 && tie_ok,
        format!("{n} instances, {bad} mismatches, tie rule {tie_ok}"),
    )
}

fn metrics() -> Outcome {
    let mut rng = common::rng(99);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let rows = common::random_matrix(&mut rng, 2 + i % 6);
        let (aa, bwt, fwt) = common::hand_metrics(&rows);
        let m = compute_metrics(&AccuracyMatrix::from_rows(rows)).unwrap();
        worst = worst
            .max((m.aa - aa).abs())
            .max((m.bwt.unwrap() - bwt.unwrap()).abs())
            .max((m.fwt.unwrap() - fwt.unwrap()).abs());
    }
    let full = run(common::oracle_config("acc-full", "all", None));
    let current = run(common::oracle_config("acc-current", "current", Some("exact")));
    let pass = worst <= METRIC_TOL
        && full.aa == 1.0
        && full.bwt == Some(0.0)
        && full.fwt == Some(0.0)
        && current.bwt == Some(-1.0);
    outcome(
        pass,
        format!(
            "max error {worst:.1e}; full window AA {} BWT {:?} FWT {:?}; current window BWT {:?}",
            full.aa, full.bwt, full.fwt, current.bwt
        ),
    )
}

fn fallback() -> Outcome {
    let mut cfg = common::oracle_config("acc-garbage", "all", None);
    cfg.backend.schema_filter = RoleSpec::Garbage;
    let r = run(cfg);
    // 3 baselines plus 1 + 2 + 3 evaluations of 4 test samples each
    outcome(
        r.fallbacks == 36 && r.aa == 1.0,
        format!("{} fallbacks counted, AA {}", r.fallbacks, r.aa),
    )
}

#[test]
fn acceptance() {
    let s = Duration::from_secs;
    let criteria: Vec<(&str, Outcome)> = vec![
        ("prompt golden files", timed(s(1), golden)),
        ("skeleton round trip", timed(s(10), round_trip)),
        ("structure composition", composition()),
        ("pseudo sample validity", timed(s(30), synthesis)),
        ("sql engine vs brute force", timed(s(30), sql_oracle)),
        ("memory budgets and determinism", memory_budgets()),
        ("medoid selection", medoids()),
        ("stream metrics", timed(s(60), metrics)),
        ("filter fallback", fallback()),
    ];
    for (i, (name, o)) in criteria.iter().enumerate() {
        println!(
            "{} [{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    let failed: Vec<_> = criteria.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed: {failed:?}");
}
