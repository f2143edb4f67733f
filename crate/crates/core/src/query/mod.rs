//! Structured query languages: parsing, rendering, placeholder skeletons.
//!
//! Parsing runs in two passes. The syntax pass produces a tree whose schema
//! positions hold [`Sym::Raw`] tokens (or [`Sym::Hole`] placeholders in
//! skeleton text); the resolution pass maps raw tokens onto [`Element`]s of a
//! [`SourceSchema`]. Skeletons are the same trees with every element and
//! literal replaced by a typed placeholder.

pub mod fill;
pub mod sexpr;
pub mod sparql;
pub mod sql;
pub mod top;

mod lex;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{Element, SchemaError, SchemaKind, SourceSchema};
use crate::value::Value;

pub use fill::fill_schema;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("syntax error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unresolved schema reference `{0}`")]
    Unresolved(String),
    #[error("{lang} queries need a {expected:?} schema, got {got:?}")]
    SchemaKindMismatch {
        lang: Language,
        expected: SchemaKind,
        got: SchemaKind,
    },
    #[error("invalid skeleton: {0}")]
    Skeleton(String),
    #[error("cannot fill skeleton: {0}")]
    Capacity(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

impl QueryError {
    pub(crate) fn syntax(pos: usize, message: impl Into<String>) -> Self {
        QueryError::Syntax {
            pos,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Sql,
    Sexpr,
    Sparql,
    Top,
}

impl Language {
    pub const ALL: [Language; 4] = [Language::Sql, Language::Sexpr, Language::Sparql, Language::Top];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::Sql => "sql",
            Language::Sexpr => "sexpr",
            Language::Sparql => "sparql",
            Language::Top => "top",
        }
    }

    pub fn schema_kind(self) -> SchemaKind {
        match self {
            Language::Sql => SchemaKind::Db,
            Language::Sexpr | Language::Sparql => SchemaKind::Kg,
            Language::Top => SchemaKind::Ds,
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Language::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown query language `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlaceholderKind {
    /// Table, class or intent.
    T,
    /// Column, relation or slot.
    C,
    E,
    V,
}

impl PlaceholderKind {
    pub const ALL: [PlaceholderKind; 4] = [
        PlaceholderKind::T,
        PlaceholderKind::C,
        PlaceholderKind::E,
        PlaceholderKind::V,
    ];

    pub fn letter(self) -> char {
        match self {
            PlaceholderKind::T => 'T',
            PlaceholderKind::C => 'C',
            PlaceholderKind::E => 'E',
            PlaceholderKind::V => 'V',
        }
    }

    fn from_letter(c: char) -> Option<Self> {
        match c {
            'T' => Some(PlaceholderKind::T),
            'C' => Some(PlaceholderKind::C),
            'E' => Some(PlaceholderKind::E),
            'V' => Some(PlaceholderKind::V),
            _ => None,
        }
    }

    pub fn of_element(el: &Element) -> Self {
        match el {
            Element::Table(_) | Element::Intent { .. } => PlaceholderKind::T,
            Element::Column { .. } | Element::Slot { .. } => PlaceholderKind::C,
            Element::Entity(_) => PlaceholderKind::E,
        }
    }
}

/// `[T1]`, `[C2]`, ...; index 0 stands for an unindexed `[T]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Placeholder {
    pub kind: PlaceholderKind,
    pub index: u32,
}

impl Placeholder {
    pub fn new(kind: PlaceholderKind, index: u32) -> Self {
        Placeholder { kind, index }
    }

    /// Parses `[T1]` / `[V]` (the whole string).
    pub fn parse(s: &str) -> Option<Self> {
        let inner = s.strip_prefix('[')?.strip_suffix(']')?;
        let mut chars = inner.chars();
        let kind = PlaceholderKind::from_letter(chars.next()?)?;
        let digits = chars.as_str();
        let index = if digits.is_empty() {
            0
        } else if digits.bytes().all(|b| b.is_ascii_digit()) && !digits.starts_with('0') {
            digits.parse().ok()?
        } else {
            return None;
        };
        Some(Placeholder { kind, index })
    }
}

impl fmt::Display for Placeholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.index == 0 {
            write!(f, "[{}]", self.kind.letter())
        } else {
            write!(f, "[{}{}]", self.kind.letter(), self.index)
        }
    }
}

/// A leaf in schema or value position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sym {
    /// Unresolved token, or a token that legitimately stays free
    /// (e.g. a dialogue slot label outside the schema).
    Raw(String),
    Elem(Element),
    Lit(Value),
    Hole(Placeholder),
}

impl Sym {
    pub fn hole(&self) -> Option<Placeholder> {
        match self {
            Sym::Hole(p) => Some(*p),
            _ => None,
        }
    }
}

/// A parsed query in one of the four supported languages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "lang", content = "tree", rename_all = "lowercase")]
pub enum QueryAst {
    Sql(sql::Select),
    Sexpr(sexpr::SExpr),
    Sparql(sparql::Sparql),
    Top(top::TopNode),
}

impl QueryAst {
    pub fn language(&self) -> Language {
        match self {
            QueryAst::Sql(_) => Language::Sql,
            QueryAst::Sexpr(_) => Language::Sexpr,
            QueryAst::Sparql(_) => Language::Sparql,
            QueryAst::Top(_) => Language::Top,
        }
    }

    /// Visits every leaf symbol in textual order.
    pub fn for_each_sym(&self, f: &mut dyn FnMut(&Sym)) {
        // the mutable walk is the single source of truth for ordering
        let mut copy = self.clone();
        copy.for_each_sym_mut(&mut |s| f(s));
    }

    pub fn for_each_sym_mut(&mut self, f: &mut dyn FnMut(&mut Sym)) {
        match self {
            QueryAst::Sql(s) => s.for_each_sym_mut(f),
            QueryAst::Sexpr(s) => s.for_each_sym_mut(f),
            QueryAst::Sparql(s) => s.for_each_sym_mut(f),
            QueryAst::Top(s) => s.for_each_sym_mut(f),
        }
    }

    pub fn syms(&self) -> Vec<Sym> {
        let mut out = Vec::new();
        self.for_each_sym(&mut |s| out.push(s.clone()));
        out
    }

    /// Schema elements referenced by the query, in textual order with repeats.
    pub fn elements(&self) -> Vec<Element> {
        self.syms()
            .into_iter()
            .filter_map(|s| match s {
                Sym::Elem(e) => Some(e),
                _ => None,
            })
            .collect()
    }

    /// Distinct placeholders in order of first occurrence.
    pub fn placeholders(&self) -> Vec<Placeholder> {
        let mut out: Vec<Placeholder> = Vec::new();
        for s in self.syms() {
            if let Sym::Hole(p) = s {
                if p.index == 0 || !out.contains(&p) {
                    out.push(p);
                }
            }
        }
        out
    }

    /// Number of tree nodes (structural nodes plus leaves).
    pub fn node_count(&self) -> usize {
        match self {
            QueryAst::Sql(s) => s.node_count(),
            QueryAst::Sexpr(s) => s.node_count(),
            QueryAst::Sparql(s) => s.node_count(),
            QueryAst::Top(s) => s.node_count(),
        }
    }

    fn render_mode(&self, skeleton: bool) -> String {
        match self {
            QueryAst::Sql(s) => s.render(skeleton),
            QueryAst::Sexpr(s) => s.render(),
            QueryAst::Sparql(s) => s.render(),
            QueryAst::Top(s) => s.render(),
        }
    }
}

fn check_kind(lang: Language, schema: &SourceSchema) -> Result<(), QueryError> {
    if lang.schema_kind() != schema.kind() {
        return Err(QueryError::SchemaKindMismatch {
            lang,
            expected: lang.schema_kind(),
            got: schema.kind(),
        });
    }
    Ok(())
}

fn syntax(text: &str, lang: Language) -> Result<QueryAst, QueryError> {
    if text.trim().is_empty() {
        return Err(QueryError::syntax(0, "empty query"));
    }
    Ok(match lang {
        Language::Sql => QueryAst::Sql(sql::parse(text)?),
        Language::Sexpr => QueryAst::Sexpr(sexpr::parse(text)?),
        Language::Sparql => QueryAst::Sparql(sparql::parse(text)?),
        Language::Top => QueryAst::Top(top::parse(text)?),
    })
}

/// Syntax pass only: schema names stay unresolved as [`Sym::Raw`].
pub fn parse_syntax(text: &str, lang: Language) -> Result<QueryAst, QueryError> {
    syntax(text, lang)
}

/// Parses `text` and resolves every schema reference against `schema`.
pub fn parse_query(text: &str, lang: Language, schema: &SourceSchema) -> Result<QueryAst, QueryError> {
    check_kind(lang, schema)?;
    let mut ast = syntax(text, lang)?;
    if let Some(p) = ast.placeholders().first() {
        return Err(QueryError::Unresolved(p.to_string()));
    }
    match &mut ast {
        QueryAst::Sql(s) => sql::resolve(s, Some(schema))?,
        QueryAst::Sexpr(s) => sexpr::resolve(s, Some(schema))?,
        QueryAst::Sparql(s) => sparql::resolve(s, Some(schema))?,
        QueryAst::Top(s) => top::resolve(s, Some(schema))?,
    }
    Ok(ast)
}

/// Normal-form text of a query. SQL keywords are lower case.
pub fn render_query(ast: &QueryAst) -> String {
    ast.render_mode(false)
}

/// A query tree whose schema and value leaves are all placeholders, with
/// indices dense per kind and assigned by first occurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySkeleton {
    tree: QueryAst,
}

impl QuerySkeleton {
    /// Canonicalizes `tree` and checks it is schema-free.
    pub fn new(mut tree: QueryAst) -> Result<Self, QueryError> {
        let mut bad = None;
        let lang = tree.language();
        tree.for_each_sym(&mut |s| match s {
            Sym::Hole(_) => {}
            Sym::Raw(r) if lang == Language::Top || sparql::is_type_predicate(r) => {}
            other => {
                bad.get_or_insert_with(|| format!("concrete leaf {other:?}"));
            }
        });
        if let Some(b) = bad {
            return Err(QueryError::Skeleton(b));
        }
        canonicalize(&mut tree);
        Ok(QuerySkeleton { tree })
    }

    pub fn language(&self) -> Language {
        self.tree.language()
    }

    pub fn tree(&self) -> &QueryAst {
        &self.tree
    }

    pub fn into_tree(self) -> QueryAst {
        self.tree
    }

    pub fn placeholders(&self) -> Vec<Placeholder> {
        self.tree.placeholders()
    }

    pub fn node_count(&self) -> usize {
        self.tree.node_count()
    }

    /// Canonical text, e.g. `SELECT COUNT(*) FROM [T1] WHERE [C1] > [V1]`.
    pub fn text(&self) -> String {
        self.tree.render_mode(true)
    }
}

impl fmt::Display for QuerySkeleton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

/// Parses skeleton text such as `(AND [T1] (JOIN [C1] [E1]))`.
pub fn parse_skeleton(text: &str, lang: Language) -> Result<QuerySkeleton, QueryError> {
    let mut ast = syntax(text, lang)?;
    match &mut ast {
        QueryAst::Sql(s) => sql::resolve(s, None)?,
        QueryAst::Sexpr(s) => sexpr::resolve(s, None)?,
        QueryAst::Sparql(s) => sparql::resolve(s, None)?,
        QueryAst::Top(s) => top::resolve(s, None)?,
    }
    QuerySkeleton::new(ast)
}

/// Renumbers placeholders per kind by first textual occurrence. Every
/// unindexed placeholder receives its own fresh index.
pub fn canonicalize(ast: &mut QueryAst) {
    let mut next: HashMap<PlaceholderKind, u32> = HashMap::new();
    let mut seen: HashMap<Placeholder, u32> = HashMap::new();
    ast.for_each_sym_mut(&mut |s| {
        if let Sym::Hole(p) = s {
            let mut fresh = || {
                let n = next.entry(p.kind).or_insert(0);
                *n += 1;
                *n
            };
            let idx = if p.index == 0 {
                fresh()
            } else if let Some(i) = seen.get(p) {
                *i
            } else {
                let i = fresh();
                seen.insert(*p, i);
                i
            };
            p.index = idx;
        }
    });
}

/// Replaces every element and literal with a placeholder; repeats of the same
/// element or literal share one index.
pub fn skeletonize(ast: &QueryAst) -> QuerySkeleton {
    let mut tree = ast.clone();
    let mut next: HashMap<PlaceholderKind, u32> = HashMap::new();
    let mut seen: HashMap<(PlaceholderKind, Sym), u32> = HashMap::new();
    tree.for_each_sym_mut(&mut |s| {
        let kind = match s {
            Sym::Elem(e) => PlaceholderKind::of_element(e),
            Sym::Lit(_) => PlaceholderKind::V,
            Sym::Raw(_) | Sym::Hole(_) => return,
        };
        let key = (kind, s.clone());
        let idx = *seen.entry(key).or_insert_with(|| {
            let n = next.entry(kind).or_insert(0);
            *n += 1;
            *n
        });
        *s = Sym::Hole(Placeholder::new(kind, idx));
    });
    // holes present before skeletonizing keep textual order semantics
    canonicalize(&mut tree);
    QuerySkeleton { tree }
}
