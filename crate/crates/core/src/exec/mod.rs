//! Query execution over small in-memory stores.
//!
//! SQL runs against a [`RelationalStore`], s-expressions and SPARQL against a
//! [`TripleStore`]. Dialogue parses have no data; executing them validates
//! the parse against its schema.

mod relational;
mod triples;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::query::top::{TopNode, TopValue};
use crate::query::{render_query, QueryAst, Sym};
use crate::schema::{Element, SourceSchema};
use crate::value::Value;

pub use relational::{eval_select, RelationalStore, StoreTable};
pub use triples::{eval_sexpr, eval_sparql, Obj, Triple, TripleStore};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("reading store {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("store line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("store invalid: {0}")]
    Invalid(String),
}

/// A loaded data store.
#[derive(Debug, Clone, PartialEq)]
pub enum Store {
    Relational(RelationalStore),
    Triples(TripleStore),
}

impl Store {
    /// `.jsonl` files are triple stores; anything else is a relational store.
    pub fn load(path: &Path) -> Result<Store, StoreError> {
        let text = std::fs::read_to_string(path).map_err(|source| StoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "jsonl") {
            Ok(Store::Triples(TripleStore::from_jsonl(&text)?))
        } else {
            Ok(Store::Relational(RelationalStore::from_json(&text)?))
        }
    }

    pub fn relational(&self) -> Option<&RelationalStore> {
        match self {
            Store::Relational(r) => Some(r),
            Store::Triples(_) => None,
        }
    }

    pub fn triples(&self) -> Option<&TripleStore> {
        match self {
            Store::Triples(t) => Some(t),
            Store::Relational(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "message", rename_all = "lowercase")]
pub enum ExecStatus {
    Success,
    Empty,
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecOutcome {
    pub status: ExecStatus,
    pub rows: Vec<Vec<Value>>,
}

impl ExecOutcome {
    pub fn error(msg: impl Into<String>) -> Self {
        ExecOutcome {
            status: ExecStatus::Error(msg.into()),
            rows: Vec::new(),
        }
    }

    pub fn from_rows(rows: Vec<Vec<Value>>) -> Self {
        let status = if rows.is_empty() {
            ExecStatus::Empty
        } else {
            ExecStatus::Success
        };
        ExecOutcome { status, rows }
    }

    pub fn is_success(&self) -> bool {
        self.status == ExecStatus::Success
    }
}

/// Runs `ast` against `store` (or, for dialogue parses, validates it against `schema`).
pub fn execute(ast: &QueryAst, store: Option<&Store>, schema: &SourceSchema) -> ExecOutcome {
    let result = match (ast, store) {
        (QueryAst::Sql(s), Some(Store::Relational(r))) => eval_select(s, r),
        (QueryAst::Sexpr(e), Some(Store::Triples(t))) => eval_sexpr(e, t),
        (QueryAst::Sparql(q), Some(Store::Triples(t))) => eval_sparql(q, t),
        (QueryAst::Top(n), _) => validate_top(n, schema).map(|()| vec![vec![Value::Str(render_query(ast))]]),
        (_, None) => Err(format!("no data store for {} query", ast.language())),
        (_, Some(_)) => Err(format!("store kind does not match {} query", ast.language())),
    };
    match result {
        Ok(rows) => ExecOutcome::from_rows(rows),
        Err(e) => ExecOutcome::error(e),
    }
}

/// Structural validity of a dialogue parse: the intent exists and every slot
/// label is a slot of its intent.
fn validate_top(n: &TopNode, schema: &SourceSchema) -> Result<(), String> {
    let group = match &n.intent {
        Sym::Elem(Element::Intent { intent, .. }) if schema.intents().iter().any(|i| &i.name == intent) => intent,
        other => return Err(format!("unknown intent {other:?}")),
    };
    for s in &n.slots {
        match &s.label {
            Sym::Elem(Element::Slot { intent, .. }) if intent == group => {}
            Sym::Raw(l) => return Err(format!("slot `{l}` is not legal for intent `{group}`")),
            other => return Err(format!("bad slot label {other:?}")),
        }
        match &s.value {
            TopValue::Intent(child) => validate_top(child, schema)?,
            TopValue::Span(Sym::Lit(_)) => {}
            TopValue::Span(other) => return Err(format!("bad slot value {other:?}")),
        }
    }
    Ok(())
}

fn cmp_rows(a: &[Value], b: &[Value]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Multiset equality of two outcomes; sequence equality when `ordered`.
/// An error on either side never matches.
pub fn result_equal(a: &ExecOutcome, b: &ExecOutcome, ordered: bool) -> bool {
    if matches!(a.status, ExecStatus::Error(_)) || matches!(b.status, ExecStatus::Error(_)) {
        return false;
    }
    if a.rows.len() != b.rows.len() {
        return false;
    }
    if ordered {
        return a.rows.iter().zip(&b.rows).all(|(x, y)| cmp_rows(x, y).is_eq());
    }
    let mut x = a.rows.clone();
    let mut y = b.rows.clone();
    x.sort_by(|p, q| cmp_rows(p, q));
    y.sort_by(|p, q| cmp_rows(p, q));
    x.iter().zip(&y).all(|(p, q)| cmp_rows(p, q).is_eq())
}

/// Whether result order is significant for this (gold) query.
pub fn is_ordered(ast: &QueryAst) -> bool {
    matches!(ast, QueryAst::Sql(s) if !s.order_by.is_empty())
}
