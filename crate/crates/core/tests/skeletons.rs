mod common;

use proptest::prelude::*;
use skr_core::query::{fill_schema, parse_query, parse_skeleton, render_query, skeletonize};
use skr_core::Language;

#[test]
fn pool_covers_every_language() {
    let cases = common::skeleton_cases();
    for lang in Language::ALL {
        let n = cases.iter().filter(|c| c.skeleton.language() == lang).count();
        assert!(n >= 5, "{lang}: {n} skeletons");
    }
}

#[test]
fn fill_then_skeletonize_is_identity() {
    let cases = common::skeleton_cases();
    let mut failures = Vec::new();
    let mut checked = 0;
    for c in cases {
        for seed in 0..8 {
            checked += 1;
            match fill_schema(&c.skeleton, &c.schema, c.store.as_ref(), seed) {
                Ok(filled) => {
                    let back = skeletonize(&filled);
                    if back.text() != c.skeleton.text() {
                        failures.push(format!(
                            "{} -> {} -> {}",
                            c.skeleton.text(),
                            render_query(&filled),
                            back.text()
                        ));
                    }
                }
                Err(e) => failures.push(format!("{}: {e}", c.skeleton.text())),
            }
        }
    }
    assert!(checked >= 500, "{checked}");
    assert!(
        failures.is_empty(),
        "{} failures:\n{}",
        failures.len(),
        failures.join("\n")
    );
}

#[test]
fn skeleton_text_reparses() {
    for c in common::skeleton_cases() {
        let text = c.skeleton.text();
        let again = parse_skeleton(&text, c.skeleton.language()).unwrap();
        assert_eq!(again.text(), text);
    }
}

#[test]
fn gold_queries_render_and_reparse() {
    for t in common::toy_tasks() {
        for e in t.train.iter().chain(&t.test) {
            let ts = t.schema(&e.sample.schema_ref).unwrap();
            let text = render_query(&e.ast);
            let again = parse_query(&text, e.sample.lang, &ts.source).unwrap();
            assert_eq!(again, e.ast, "{text}");
        }
    }
}

#[test]
fn indices_are_canonical_after_renaming() {
    let a = parse_skeleton("SELECT [C7] FROM [T3] WHERE [C2] = [V9]", Language::Sql).unwrap();
    assert_eq!(a.text(), "SELECT [C1] FROM [T1] WHERE [C2] = [V1]");
    let b = parse_skeleton("(AND [T4] (JOIN [C9] [E2]))", Language::Sexpr).unwrap();
    assert_eq!(b.text(), "(AND [T1] (JOIN [C1] [E1]))");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_seed_round_trips(pick in 0usize..10_000, seed in any::<u64>()) {
        let cases = common::skeleton_cases();
        let c = &cases[pick % cases.len()];
        let filled = fill_schema(&c.skeleton, &c.schema, c.store.as_ref(), seed).unwrap();
        prop_assert_eq!(skeletonize(&filled).text(), c.skeleton.text());
    }

    #[test]
    fn fill_is_a_function_of_the_seed(pick in 0usize..10_000, seed in any::<u64>()) {
        let cases = common::skeleton_cases();
        let c = &cases[pick % cases.len()];
        let a = fill_schema(&c.skeleton, &c.schema, c.store.as_ref(), seed).unwrap();
        let b = fill_schema(&c.skeleton, &c.schema, c.store.as_ref(), seed).unwrap();
        prop_assert_eq!(render_query(&a), render_query(&b));
    }
}
