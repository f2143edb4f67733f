//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::json;

use skr_core::backend::prompt;
use skr_core::exec::{RelationalStore, StoreTable};
use skr_core::harness::{Limits, RunConfig, Task};
use skr_core::query::{parse_query, QueryAst};
use skr_core::schema::{extract_used_schema, unify};
use skr_core::{Language, SourceSchema, Value};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn stream_dirs() -> Vec<PathBuf> {
    ["t1_sql", "t2_kg", "t3_top"]
        .iter()
        .map(|t| data_dir().join("stream").join(t))
        .collect()
}

pub fn toy_tasks() -> Vec<Task> {
    stream_dirs()
        .iter()
        .map(|d| Task::load(d, Limits::default()).expect("toy task loads"))
        .collect()
}

/// One worked example: a schema and a gold sample.
#[derive(Debug, Clone, Deserialize)]
pub struct Worked {
    pub lang: Language,
    pub question: String,
    pub query: String,
    pub schema: SourceSchema,
}

pub const WORKED: [&str; 4] = ["spider", "grailqa", "cwq", "mtop"];

pub fn worked(name: &str) -> Worked {
    let p = data_dir().join("worked").join(format!("{name}.json"));
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// `(file, expected, rendered)` for both stages of every worked example.
pub fn golden_blocks() -> Vec<(String, String, String)> {
    let mut out = Vec::new();
    for name in WORKED {
        let w = worked(name);
        let u = unify(&w.schema).unwrap();
        let ast = parse_query(&w.query, w.lang, &w.schema).unwrap();
        let subset = extract_used_schema(&ast, &u).unwrap();
        let filter = prompt::filter_prompt(w.lang, &prompt::filter_schema_text(&u), &w.question)
            + &prompt::subset_text(&subset)
            + "\n";
        let build =
            prompt::build_prompt(w.lang, &prompt::build_schema_text(&w.schema, &u), "", &w.question) + &w.query + "\n";
        for (stage, text) in [("filter", filter), ("build", build)] {
            let file = format!("{name}_{stage}.txt");
            let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(&file);
            out.push((file, std::fs::read_to_string(path).unwrap(), text));
        }
    }
    out
}

/// Oracle-backed run over the toy stream.
pub fn oracle_config(run_id: &str, window: &str, accuracy: Option<&str>) -> RunConfig {
    let mut v = json!({
        "run_id": run_id,
        "tasks": stream_dirs(),
        "backend": {
            "schema_filter": {"kind": "oracle"},
            "query_builder": {"kind": "oracle"}
        },
        "oracle": {"p": 0.0, "window": window},
        "seed": 7
    });
    if let Some(a) = accuracy {
        v["accuracy"] = json!(a);
    }
    let cfg: RunConfig = serde_json::from_value(v).unwrap();
    cfg.validate().unwrap();
    cfg
}

/// The three hand-evaluated summary metrics over a full matrix
/// (`acc[k][j]`, `k` 0-based task, `j` 0 = isolated, `j` = after step `j`).
pub fn hand_metrics(acc: &[Vec<f64>]) -> (f64, Option<f64>, Option<f64>) {
    let k = acc.len();
    let aa = (0..k).map(|i| acc[i][k]).sum::<f64>() / k as f64;
    if k == 1 {
        return (aa, None, None);
    }
    let bwt = (0..k - 1).map(|i| acc[i][k] - acc[i][i + 1]).sum::<f64>() / (k - 1) as f64;
    let fwt = (1..k).map(|i| acc[i][i + 1] - acc[i][0]).sum::<f64>() / (k - 1) as f64;
    (aa, Some(bwt), Some(fwt))
}

// ---------------------------------------------------------------------------
// Brute-force SQL oracle over a two-table store.

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Null,
    Int(i64),
    Str(String),
}

impl Cell {
    fn value(&self) -> Value {
        match self {
            Cell::Null => Value::Null,
            Cell::Int(i) => Value::Int(*i),
            Cell::Str(s) => Value::Str(s.clone()),
        }
    }

    fn lit(&self) -> String {
        match self {
            Cell::Null => "NULL".into(),
            Cell::Int(i) => i.to_string(),
            Cell::Str(s) => format!("'{s}'"),
        }
    }
}

pub const EMP: [&str; 5] = ["id", "name", "dept", "salary", "city"];
pub const DEPT: [&str; 3] = ["dept_id", "title", "floor"];
const NAMES: [&str; 8] = ["ann", "bob", "cy", "dana", "eli", "fay", "gus", "hal"];
const CITIES: [&str; 4] = ["oslo", "rome", "lima", "kyiv"];
const TITLES: [&str; 5] = ["sales", "ops", "legal", "hr", "it"];

pub struct Toy {
    pub emp: Vec<Vec<Cell>>,
    pub dept: Vec<Vec<Cell>>,
}

impl Toy {
    pub fn random(rng: &mut ChaCha8Rng) -> Toy {
        let n = rng.random_range(0..=60);
        let emp = (0..n)
            .map(|i| {
                vec![
                    Cell::Int(i as i64 + 1),
                    Cell::Str(NAMES[rng.random_range(0..NAMES.len())].into()),
                    Cell::Int(rng.random_range(1..=6)),
                    if rng.random_bool(0.2) {
                        Cell::Null
                    } else {
                        Cell::Int(rng.random_range(10..=40) * 100)
                    },
                    Cell::Str(CITIES[rng.random_range(0..CITIES.len())].into()),
                ]
            })
            .collect();
        let dept = (1..=5)
            .map(|d| {
                vec![
                    Cell::Int(d),
                    Cell::Str(TITLES[d as usize - 1].into()),
                    Cell::Int(rng.random_range(1..=4)),
                ]
            })
            .collect();
        Toy { emp, dept }
    }

    pub fn schema(&self) -> SourceSchema {
        serde_json::from_value(json!({"type": "db", "tables": [
            {"name": "emp", "columns": EMP},
            {"name": "dept", "columns": DEPT}
        ]}))
        .unwrap()
    }

    pub fn store(&self) -> RelationalStore {
        let table = |name: &str, cols: &[&str], rows: &[Vec<Cell>]| StoreTable {
            name: name.into(),
            columns: cols.iter().map(|c| c.to_string()).collect(),
            rows: rows.iter().map(|r| r.iter().map(Cell::value).collect()).collect(),
        };
        RelationalStore {
            tables: vec![table("emp", &EMP, &self.emp), table("dept", &DEPT, &self.dept)],
        }
    }
}

/// One comparison on an `emp` column, evaluated with SQL null semantics.
#[derive(Debug, Clone)]
struct Atom {
    col: usize,
    op: &'static str,
    lit: Cell,
}

impl Atom {
    fn random(rng: &mut ChaCha8Rng) -> Atom {
        let col = [0usize, 1, 2, 3, 4][rng.random_range(0..5)];
        let numeric = matches!(col, 0 | 2 | 3);
        let ops: &[&str] = if numeric {
            &["=", "!=", "<", ">", "<=", ">="]
        } else {
            &["=", "!=", "like"]
        };
        let op = ops[rng.random_range(0..ops.len())];
        let lit = match (col, op) {
            (0, _) => Cell::Int(rng.random_range(0..=60)),
            (2, _) => Cell::Int(rng.random_range(0..=7)),
            (3, _) => Cell::Int(rng.random_range(9..=41) * 100),
            (_, "like") => {
                let c = ["a", "o", "y", "li"][rng.random_range(0..4)];
                Cell::Str(format!("%{c}%"))
            }
            (1, _) => Cell::Str(NAMES[rng.random_range(0..NAMES.len())].into()),
            _ => Cell::Str(CITIES[rng.random_range(0..CITIES.len())].into()),
        };
        Atom { col, op, lit }
    }

    fn sql(&self, qual: &str) -> String {
        format!("{qual}{} {} {}", EMP[self.col], self.op, self.lit.lit())
    }

    fn holds(&self, row: &[Cell]) -> Option<bool> {
        match (&row[self.col], &self.lit) {
            (Cell::Null, _) => None,
            (Cell::Int(a), Cell::Int(b)) => Some(match self.op {
                "=" => a == b,
                "!=" => a != b,
                "<" => a < b,
                ">" => a > b,
                "<=" => a <= b,
                _ => a >= b,
            }),
            (Cell::Str(a), Cell::Str(b)) => Some(match self.op {
                "=" => a == b,
                "!=" => a != b,
                _ => {
                    let needle = b.trim_matches('%');
                    a.contains(needle)
                }
            }),
            _ => unreachable!("typed literal"),
        }
    }
}

/// `a`, `a AND b` or `a OR b`.
#[derive(Debug, Clone)]
struct Filter(Vec<Atom>, bool);

impl Filter {
    fn random(rng: &mut ChaCha8Rng) -> Option<Filter> {
        match rng.random_range(0..4) {
            0 => None,
            1 => Some(Filter(vec![Atom::random(rng)], true)),
            n => Some(Filter(vec![Atom::random(rng), Atom::random(rng)], n == 2)),
        }
    }

    fn sql(&self, qual: &str) -> String {
        let join = if self.1 { " AND " } else { " OR " };
        self.0.iter().map(|a| a.sql(qual)).collect::<Vec<_>>().join(join)
    }

    #[allow(clippy::manual_try_fold)] // three-valued, not short-circuiting
    fn keep(f: &Option<Filter>, row: &[Cell]) -> bool {
        let Some(f) = f else { return true };
        let vals = f.0.iter().map(|a| a.holds(row));
        if f.1 {
            vals.fold(Some(true), |acc, v| match (acc, v) {
                (Some(false), _) | (_, Some(false)) => Some(false),
                (Some(true), Some(true)) => Some(true),
                _ => None,
            }) == Some(true)
        } else {
            vals.fold(Some(false), |acc, v| match (acc, v) {
                (Some(true), _) | (_, Some(true)) => Some(true),
                (Some(false), Some(false)) => Some(false),
                _ => None,
            }) == Some(true)
        }
    }
}

fn where_clause(f: &Option<Filter>, qual: &str) -> String {
    f.as_ref()
        .map(|f| format!(" WHERE {}", f.sql(qual)))
        .unwrap_or_default()
}

/// A random query in the tested grammar plus its expected rows.
pub struct OracleCase {
    pub sql: String,
    pub ordered: bool,
    pub rows: Vec<Vec<Value>>,
}

fn cells(rows: Vec<Vec<Cell>>) -> Vec<Vec<Value>> {
    rows.into_iter().map(|r| r.iter().map(Cell::value).collect()).collect()
}

fn aggregate(func: &str, col: Option<usize>, rows: &[&Vec<Cell>]) -> Cell {
    let Some(c) = col else {
        return Cell::Int(rows.len() as i64);
    };
    let vals: Vec<&Cell> = rows.iter().map(|r| &r[c]).filter(|v| **v != Cell::Null).collect();
    match func {
        "count" => Cell::Int(vals.len() as i64),
        "sum" => {
            if vals.is_empty() {
                Cell::Null
            } else {
                Cell::Int(vals.iter().map(|v| if let Cell::Int(i) = v { *i } else { 0 }).sum())
            }
        }
        _ => {
            let ints = vals
                .iter()
                .filter_map(|v| if let Cell::Int(i) = v { Some(*i) } else { None });
            let best = if func == "min" { ints.min() } else { ints.max() };
            best.map(Cell::Int).unwrap_or(Cell::Null)
        }
    }
}

pub fn random_case(toy: &Toy, rng: &mut ChaCha8Rng) -> OracleCase {
    let filter = Filter::random(rng);
    let kept: Vec<&Vec<Cell>> = toy.emp.iter().filter(|r| Filter::keep(&filter, r)).collect();
    match rng.random_range(0..5) {
        // projection, optionally DISTINCT or ordered by the key
        0 => {
            let cols: Vec<usize> = match rng.random_range(0..3) {
                0 => vec![1],
                1 => vec![1, 4],
                _ => vec![0, 3],
            };
            let distinct = rng.random_bool(0.3);
            let order = !distinct && rng.random_bool(0.5);
            let desc = rng.random_bool(0.5);
            let limit = (order && rng.random_bool(0.5)).then(|| rng.random_range(0..8usize));
            let mut sql = format!(
                "SELECT {}{} FROM emp{}",
                if distinct { "DISTINCT " } else { "" },
                cols.iter().map(|&c| EMP[c]).collect::<Vec<_>>().join(" , "),
                where_clause(&filter, "")
            );
            let mut rows: Vec<&Vec<Cell>> = kept.clone();
            if order {
                sql += &format!(" ORDER BY id{}", if desc { " DESC" } else { "" });
                if desc {
                    rows.reverse();
                }
            }
            if let Some(n) = limit {
                sql += &format!(" LIMIT {n}");
                rows.truncate(n);
            }
            let mut out: Vec<Vec<Cell>> = rows
                .iter()
                .map(|r| cols.iter().map(|&c| r[c].clone()).collect())
                .collect();
            if distinct {
                let mut seen = Vec::new();
                out.retain(|r| {
                    let fresh = !seen.contains(r);
                    if fresh {
                        seen.push(r.clone());
                    }
                    fresh
                });
            }
            OracleCase {
                sql,
                ordered: order,
                rows: cells(out),
            }
        }
        // whole-table aggregates
        1 => {
            let func = ["count", "sum", "min", "max"][rng.random_range(0..4)];
            let col = if func == "count" && rng.random_bool(0.5) {
                None
            } else {
                Some([0usize, 2, 3][rng.random_range(0..3)])
            };
            let arg = col.map(|c| EMP[c]).unwrap_or("*");
            OracleCase {
                sql: format!("SELECT {func}({arg}) FROM emp{}", where_clause(&filter, "")),
                ordered: false,
                rows: cells(vec![vec![aggregate(func, col, &kept)]]),
            }
        }
        // grouped counts
        2 => {
            let g = [2usize, 4][rng.random_range(0..2)];
            let mut groups: BTreeMap<String, (Cell, usize)> = BTreeMap::new();
            for r in &kept {
                let e = groups.entry(r[g].lit()).or_insert((r[g].clone(), 0));
                e.1 += 1;
            }
            OracleCase {
                sql: format!(
                    "SELECT {0} , COUNT(*) FROM emp{1} GROUP BY {0}",
                    EMP[g],
                    where_clause(&filter, "")
                ),
                ordered: false,
                rows: cells(
                    groups
                        .into_values()
                        .map(|(k, n)| vec![k, Cell::Int(n as i64)])
                        .collect(),
                ),
            }
        }
        // inner join on the department key
        3 => {
            let floor = rng.random_range(0..=5);
            let mut out = Vec::new();
            for e in &kept {
                for d in &toy.dept {
                    if e[2] == d[0] && matches!(d[2], Cell::Int(f) if f >= floor) {
                        out.push(vec![e[1].clone(), d[1].clone()]);
                    }
                }
            }
            let cond = match &filter {
                Some(f) => format!(" WHERE ({}) AND dept.floor >= {floor}", f.sql("emp.")),
                None => format!(" WHERE dept.floor >= {floor}"),
            };
            OracleCase {
                sql: format!("SELECT emp.name , dept.title FROM emp JOIN dept ON emp.dept = dept.dept_id{cond}"),
                ordered: false,
                rows: cells(out),
            }
        }
        // IN subquery
        _ => {
            let floor = rng.random_range(0..=5);
            let depts: Vec<&Cell> = toy
                .dept
                .iter()
                .filter(|d| matches!(d[2], Cell::Int(f) if f < floor))
                .map(|d| &d[0])
                .collect();
            let out = kept
                .iter()
                .filter(|r| depts.contains(&&r[2]))
                .map(|r| vec![r[0].clone()])
                .collect();
            let inner = format!("dept IN (SELECT dept_id FROM dept WHERE floor < {floor})");
            let sql = match &filter {
                Some(f) => format!("SELECT id FROM emp WHERE ({}) AND {inner}", f.sql("")),
                None => format!("SELECT id FROM emp WHERE {inner}"),
            };
            OracleCase {
                sql,
                ordered: false,
                rows: cells(out),
            }
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Whether the tree is an SQL query.
pub fn is_sql(ast: &QueryAst) -> bool {
    matches!(ast, QueryAst::Sql(_))
}

// ---------------------------------------------------------------------------
// Skeleton pools for round-trip checks.

use skr_core::exec::Store;
use skr_core::query::{fill_schema, parse_syntax, skeletonize, PlaceholderKind, QueryError, QuerySkeleton};
use skr_core::synthesis::compose_rule;

const NS: &str = "PREFIX ns: <http://rdf.freebase.com/ns/> ";

pub const SPARQL_LIB: [&str; 4] = [
    "SELECT DISTINCT ?x WHERE { ?x ns:book.book.author ns:m.austen . }",
    "SELECT DISTINCT ?x WHERE { ?b ns:book.book.author ns:m.tolkien . ?b ns:book.book.genre ?x . }",
    "SELECT DISTINCT ?x WHERE { ?x ns:type.object.type ns:book.book . ?x ns:book.book.genre ns:m.novel . }",
    "SELECT DISTINCT ?x WHERE { ns:m.hobbit ns:book.book.author ?x . }",
];

pub struct SkeletonCase {
    pub skeleton: QuerySkeleton,
    pub schema: SourceSchema,
    pub store: Option<Store>,
}

/// Gold skeletons of the toy stream, the worked examples and a few SPARQL
/// queries over the book graph, plus rule compositions of same-task pairs.
pub fn skeleton_cases() -> &'static [SkeletonCase] {
    static CASES: std::sync::OnceLock<Vec<SkeletonCase>> = std::sync::OnceLock::new();
    CASES.get_or_init(build_skeleton_cases)
}

fn build_skeleton_cases() -> Vec<SkeletonCase> {
    let mut base: Vec<(Vec<QuerySkeleton>, SourceSchema, Option<Store>)> = Vec::new();
    for t in toy_tasks() {
        for ts in t.schemas.values() {
            let sks = t.train.iter().chain(&t.test).map(|e| skeletonize(&e.ast)).collect();
            base.push((sks, ts.source.clone(), ts.store.clone()));
        }
        if t.lang == Language::Sexpr {
            let ts = t.schemas.values().next().unwrap();
            let sks = SPARQL_LIB
                .iter()
                .map(|q| skeletonize(&parse_query(&format!("{NS}{q}"), Language::Sparql, &ts.source).unwrap()))
                .collect();
            base.push((sks, ts.source.clone(), ts.store.clone()));
        }
    }
    for name in WORKED {
        let w = worked(name);
        let ast = parse_query(&w.query, w.lang, &w.schema).unwrap();
        base.push((vec![skeletonize(&ast)], w.schema, None));
    }
    let mut out = Vec::new();
    for (sks, schema, store) in base {
        let mut all = sks.clone();
        for a in &sks {
            for b in &sks {
                if let Ok(c) = compose_rule(a, b) {
                    all.push(c);
                }
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for sk in all {
            if fits(&sk, &schema, store.as_ref()) && seen.insert(sk.text()) {
                out.push(SkeletonCase {
                    skeleton: sk,
                    schema: schema.clone(),
                    store: store.clone(),
                });
            }
        }
    }
    out
}

/// Whether the schema can host the skeleton at all: enough distinct groups
/// and entities, and no capacity error from the filler (compositions easily
/// outgrow tiny schemas).
pub fn fits(sk: &QuerySkeleton, schema: &SourceSchema, store: Option<&Store>) -> bool {
    let holes = sk.placeholders();
    let count = |k: PlaceholderKind| holes.iter().filter(|p| p.kind == k).count();
    count(PlaceholderKind::T) <= unify(schema).unwrap().groups.len()
        && count(PlaceholderKind::E) <= schema.entities().len()
        && !matches!(fill_schema(sk, schema, store, 0), Err(QueryError::Capacity(_)))
}

/// Syntax-only parse, for tests that never bind a schema.
pub fn syntax(text: &str, lang: Language) -> QueryAst {
    parse_syntax(text, lang).unwrap()
}

// ---------------------------------------------------------------------------
// Synthesis helpers.

use skr_core::backend::{Role, Router, RuleSynthesizer, TemplateQuestion};
use skr_core::exec::execute;
use skr_core::synthesis::{synthesize_memory, ComposeMode, StructurePool, SynthesisConfig, SynthesisReport};

pub fn mock_router() -> Router {
    Router::new()
        .bind(Role::QuestionGenerator, std::sync::Arc::new(TemplateQuestion))
        .bind(Role::StructureSynthesizer, std::sync::Arc::new(RuleSynthesizer))
}

/// Runs `attempts` synthesis attempts with the target set to the same number.
pub fn synthesize_attempts(task: &Task, attempts: usize, mode: ComposeMode, seed: u64) -> SynthesisReport {
    let pool = StructurePool::from_task(task);
    let mut cfg = SynthesisConfig::new(attempts, mode, seed);
    cfg.max_attempts = Some(attempts);
    synthesize_memory(&pool, &mock_router(), &cfg).unwrap()
}

/// Problems with retained samples: failed re-execution, empty results,
/// skeleton mismatch or a structure already present in the pool.
pub fn audit_samples(task: &Task, report: &SynthesisReport) -> Vec<String> {
    let pool = StructurePool::from_task(task);
    let mut bad = Vec::new();
    for s in &report.samples {
        let ts = task.schema(&s.schema_ref).unwrap();
        let ast = match parse_query(&s.query, s.lang, &ts.source) {
            Ok(a) => a,
            Err(e) => {
                bad.push(format!("{}: {e}", s.query));
                continue;
            }
        };
        let out = execute(&ast, ts.store.as_ref(), &ts.source);
        if !out.is_success() || out.rows.is_empty() {
            bad.push(format!("{}: {:?}", s.query, out.status));
        }
        if skeletonize(&ast).text() != s.skeleton {
            bad.push(format!(
                "{}: skeleton {} recorded as {}",
                s.query,
                skeletonize(&ast).text(),
                s.skeleton
            ));
        }
        if pool.contains(&s.skeleton) {
            bad.push(format!("{}: skeleton already in the pool", s.skeleton));
        }
        if s.question.trim().is_empty() {
            bad.push(format!("{}: empty question", s.query));
        }
    }
    bad
}

// ---------------------------------------------------------------------------
// Memory and clustering helpers.

use skr_core::harness::{build_memory, MemoryConfig, SynthesisSettings};
use skr_core::memory::{HashEmbedder, MemoryBank};

pub fn default_bank(task: &Task, k: usize, seed: u64) -> MemoryBank {
    build_memory(
        task,
        k,
        &MemoryConfig::default(),
        &SynthesisSettings::default(),
        seed,
        &mock_router(),
        &HashEmbedder,
    )
    .unwrap()
    .0
}

/// Saves `bank` under a fresh directory and returns its two files' bytes.
pub fn persisted(bank: &MemoryBank) -> (Vec<u8>, Vec<u8>) {
    let dir = tempfile::tempdir().unwrap();
    bank.save(dir.path()).unwrap();
    let d = MemoryBank::dir(dir.path(), bank.task);
    (
        std::fs::read(d.join("a.jsonl")).unwrap(),
        std::fs::read(d.join("b.jsonl")).unwrap(),
    )
}

fn oracle_cos_dist(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        1.0
    } else {
        1.0 - dot / (na * nb)
    }
}

/// Exhaustive medoid per cluster of `assignment`: the member nearest to the
/// cluster mean, ties broken by smallest key, then by position.
pub fn oracle_medoids(keys: &[String], points: &[Vec<f64>], assignment: &[usize], k: usize) -> Vec<usize> {
    (0..k)
        .map(|c| {
            let members: Vec<usize> = (0..points.len()).filter(|&i| assignment[i] == c).collect();
            let dim = points[0].len();
            let mut mean = vec![0.0; dim];
            for &i in &members {
                for d in 0..dim {
                    mean[d] += points[i][d];
                }
            }
            for m in &mut mean {
                *m /= members.len() as f64;
            }
            let mut best = members[0];
            for &i in &members[1..] {
                let (di, db) = (
                    oracle_cos_dist(&points[i], &mean),
                    oracle_cos_dist(&points[best], &mean),
                );
                if di < db || (di == db && (keys[i].as_str(), i) < (keys[best].as_str(), best)) {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// A small clustering instance: up to 12 points in 2-5 dimensions with
/// non-negative coordinates, some repeated to create exact ties.
pub fn cluster_instance(rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<Vec<f64>>, usize) {
    let n = rng.random_range(1..=12);
    let dim = rng.random_range(2..=5);
    let mut points: Vec<Vec<f64>> = Vec::new();
    for _ in 0..n {
        if !points.is_empty() && rng.random_bool(0.15) {
            let j = rng.random_range(0..points.len());
            points.push(points[j].clone());
        } else {
            points.push((0..dim).map(|_| rng.random_range(0..5) as f64).collect());
        }
    }
    let keys = (0..n).map(|i| format!("k{:02}", (i * 7) % 13)).collect();
    let k = rng.random_range(1..=n.min(4));
    (keys, points, k)
}

/// A dense random accuracy matrix with `k` tasks; cells are multiples of 1/40.
pub fn random_matrix(rng: &mut ChaCha8Rng, k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|_| (0..=k).map(|_| rng.random_range(0..=40) as f64 / 40.0).collect())
        .collect()
}
