mod common;

use skr_core::exec::{execute, ExecOutcome};
use skr_core::harness::Task;
use skr_core::query::{parse_query, parse_skeleton, render_query, QueryError};
use skr_core::{Language, Value};

fn books() -> Task {
    common::toy_tasks().remove(1)
}

fn run(task: &Task, text: &str, lang: Language) -> ExecOutcome {
    let ts = task.schemas.values().next().unwrap();
    let ast = parse_query(text, lang, &ts.source).unwrap();
    execute(&ast, ts.store.as_ref(), &ts.source)
}

fn strings(out: &ExecOutcome) -> Vec<String> {
    assert!(out.is_success(), "{:?}", out.status);
    let mut v: Vec<String> = out
        .rows
        .iter()
        .map(|r| r.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","))
        .collect();
    v.sort();
    v
}

#[test]
fn sexpr_answers() {
    let t = books();
    let q = |s: &str| strings(&run(&t, s, Language::Sexpr));
    assert_eq!(
        q("(AND book.book (JOIN book.book.author m.austen))"),
        ["m.emma", "m.persuasion"]
    );
    assert_eq!(
        q("(AND book.author (JOIN (R book.book.author) m.hobbit))"),
        ["m.tolkien"]
    );
    assert_eq!(q("(COUNT (AND book.book (JOIN book.book.genre m.novel)))"), ["4"]);
    assert_eq!(q("(ARGMAX book.book book.book.pages)"), ["m.emma"]);
    assert_eq!(q("(ARGMIN book.book book.book.pages)"), ["m.persuasion"]);
    assert_eq!(
        q("(AND book.genre (JOIN (R book.book.genre) (JOIN book.book.author m.woolf)))"),
        ["m.novel"]
    );
}

#[test]
fn sparql_answers() {
    let t = books();
    let ns = "PREFIX ns: <http://rdf.freebase.com/ns/> ";
    let q = |s: &str| strings(&run(&t, &format!("{ns}{s}"), Language::Sparql));
    assert_eq!(q(common::SPARQL_LIB[0]), ["m.emma", "m.persuasion"]);
    assert_eq!(q(common::SPARQL_LIB[1]), ["m.fantasy"]);
    assert_eq!(
        q(common::SPARQL_LIB[2]),
        ["m.emma", "m.orlando", "m.persuasion", "m.waves"]
    );
    assert_eq!(q(common::SPARQL_LIB[3]), ["m.tolkien"]);
}

#[test]
fn worked_sparql_tolerates_glued_keywords() {
    let w = common::worked("cwq");
    let ast = parse_query(&w.query, Language::Sparql, &w.schema).unwrap();
    let again = parse_query(&render_query(&ast), Language::Sparql, &w.schema).unwrap();
    assert_eq!(again, ast);
}

#[test]
fn top_validity_is_checked_against_the_schema() {
    let t = common::toy_tasks().remove(2);
    let ts = t.schemas.values().next().unwrap();
    let ok = parse_query("[IN:GET_WEATHER [SL:LOCATION paris ] ]", Language::Top, &ts.source).unwrap();
    assert!(execute(&ok, None, &ts.source).is_success());
    // DATE_TIME is not a slot of IN:SEND_MESSAGE
    let bad = parse_query("[IN:SEND_MESSAGE [SL:DATE_TIME now ] ]", Language::Top, &ts.source).unwrap();
    assert!(!execute(&bad, None, &ts.source).is_success());
    assert!(matches!(
        parse_query("[IN:FLY_PLANE ]", Language::Top, &ts.source),
        Err(QueryError::Unresolved(_))
    ));
}

#[test]
fn nested_top_intents_round_trip() {
    let t = common::toy_tasks().remove(2);
    let ts = t.schemas.values().next().unwrap();
    let text = "[IN:CREATE_REMINDER [SL:TODO [IN:SEND_MESSAGE [SL:RECIPIENT ann ] ] ] [SL:DATE_TIME at noon ] ]";
    let ast = parse_query(text, Language::Top, &ts.source).unwrap();
    assert_eq!(render_query(&ast), text);
    assert!(execute(&ast, None, &ts.source).is_success());
}

#[test]
fn unknown_schema_names_are_rejected() {
    let t = common::toy_tasks().remove(0);
    let s = &t.schemas.values().next().unwrap().source;
    assert!(matches!(
        parse_query("select nope from head", Language::Sql, s),
        Err(QueryError::Unresolved(_))
    ));
    assert!(matches!(
        parse_query("select name from nowhere", Language::Sql, s),
        Err(QueryError::Unresolved(_))
    ));
}

#[test]
fn syntax_errors_carry_positions() {
    for (text, lang) in [
        ("select from", Language::Sql),
        ("(AND book.book", Language::Sexpr),
        ("SELECT ?x WHERE { ?x", Language::Sparql),
        ("[IN:GET_WEATHER [SL:LOCATION paris ]", Language::Top),
    ] {
        match skr_core::query::parse_syntax(text, lang) {
            Err(QueryError::Syntax { pos, .. }) => assert!(pos <= text.len()),
            other => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn skeleton_literals_are_rejected_where_holes_belong() {
    assert!(parse_skeleton("SELECT name FROM head", Language::Sql).is_err());
    assert!(parse_skeleton("SELECT [C1] FROM [T1] LIMIT 3", Language::Sql).is_ok());
}

#[test]
fn sql_ordering_and_limits() {
    let t = common::toy_tasks().remove(0);
    let ts = t.schemas.values().next().unwrap();
    let ast = parse_query(
        "select name from department order by num_employees desc limit 1",
        Language::Sql,
        &ts.source,
    )
    .unwrap();
    let out = execute(&ast, ts.store.as_ref(), &ts.source);
    assert_eq!(out.rows, vec![vec![Value::Str("Defense".into())]]);
    assert!(skr_core::exec::is_ordered(&ast));
}
