//! SPARQL subset: `PREFIX` declarations, `SELECT [DISTINCT]`, a conjunctive
//! basic graph pattern and `FILTER` comparisons.

use serde::{Deserialize, Serialize};

use super::lex::{number, Cursor};
use super::sexpr::{find_node, find_relation};
use super::sql::CmpOp;
use super::{Placeholder, PlaceholderKind, QueryError, Sym};
use crate::schema::{Element, SourceSchema};
use crate::value::Value;

/// Local name of the class-membership predicate.
pub const TYPE_PREDICATE: &str = "type.object.type";

pub(crate) fn is_type_predicate(s: &str) -> bool {
    s == TYPE_PREDICATE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sparql {
    pub prefixes: Vec<(String, String)>,
    pub distinct: bool,
    /// Empty means `*`.
    pub vars: Vec<String>,
    pub patterns: Vec<Pattern>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Term {
    Var(String),
    Iri(String),
    /// `ns:m.08kmfj`, or a bare placeholder when `prefix` is `None`.
    Node {
        prefix: Option<String>,
        sym: Sym,
    },
    Lit(Sym),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Pattern {
    Triple(Term, Term, Term),
    Filter { left: Term, op: CmpOp, right: Term },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Var(String),
    Iri(String),
    PName(String, String),
    Hole(Placeholder),
    Num(Value),
    Str(String),
    P(&'static str),
}

const PUNCT: [&str; 12] = ["<=", ">=", "!=", "{", "}", "(", ")", ".", "*", "=", "<", ">"];

fn local_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '.' | '-')
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, QueryError> {
    let mut c = Cursor::new(src);
    let mut out = Vec::new();
    loop {
        c.skip_ws();
        let pos = c.pos;
        let Some(ch) = c.peek() else {
            return Ok(out);
        };
        if ch == '?' || ch == '$' {
            c.bump();
            let name = c.take_while(|x| x.is_alphanumeric() || x == '_');
            if name.is_empty() {
                return Err(QueryError::syntax(pos, "empty variable name"));
            }
            // tolerate `?xWHERE` where whitespace was lost before the keyword
            match name.strip_suffix("WHERE").filter(|v| !v.is_empty()) {
                Some(v) => {
                    out.push((Tok::Var(v.to_string()), pos));
                    out.push((Tok::Word("WHERE".into()), pos + 1 + v.len()));
                }
                None => out.push((Tok::Var(name.to_string()), pos)),
            }
        } else if ch == '<'
            && c.rest()[1..].find('>').is_some_and(|end| {
                let inner = &c.rest()[1..1 + end];
                !inner.is_empty() && !inner.contains(char::is_whitespace)
            })
        {
            c.bump();
            let iri = c.take_while(|x| x != '>').to_string();
            c.bump();
            out.push((Tok::Iri(iri), pos));
        } else if ch == '[' {
            out.push((
                Tok::Hole(c.placeholder().ok_or_else(|| c.err("malformed placeholder"))?),
                pos,
            ));
        } else if ch == '"' || ch == '\'' {
            out.push((Tok::Str(c.quoted()?), pos));
        } else if ch.is_ascii_digit() || (ch == '-' && c.peek_nth(1).is_some_and(|d| d.is_ascii_digit())) {
            let start = c.pos;
            c.bump();
            c.take_while(|x| x.is_ascii_digit() || x == '.');
            let mut t = &src[start..c.pos];
            while t.ends_with('.') {
                t = &t[..t.len() - 1];
                c.pos -= 1;
            }
            out.push((
                Tok::Num(number(t).ok_or_else(|| QueryError::syntax(pos, "bad number"))?),
                pos,
            ));
        } else if ch.is_alphabetic() || ch == '_' || ch == ':' {
            let word = c.take_while(|x| x.is_alphanumeric() || x == '_' || x == '-');
            if c.eat(":") {
                let local = if c.peek() == Some('[') {
                    c.placeholder()
                        .map(|p| p.to_string())
                        .ok_or_else(|| c.err("malformed placeholder"))?
                } else {
                    let start = c.pos;
                    c.take_while(local_char);
                    while c.pos > start && src[..c.pos].ends_with('.') {
                        c.pos -= 1;
                    }
                    src[start..c.pos].to_string()
                };
                out.push((Tok::PName(word.to_string(), local), pos));
            } else {
                out.push((Tok::Word(word.to_string()), pos));
            }
        } else if let Some(p) = PUNCT.iter().find(|p| c.rest().starts_with(*p)) {
            c.pos += p.len();
            out.push((Tok::P(p), pos));
        } else {
            return Err(c.err(format!("unexpected character `{ch}`")));
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    i: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.0)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.i).map_or(self.len, |t| t.1)
    }

    fn err(&self, m: impl Into<String>) -> QueryError {
        QueryError::syntax(self.pos(), m)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        let hit = self.is_kw(kw);
        if hit {
            self.i += 1;
        }
        hit
    }

    fn eat_p(&mut self, p: &str) -> bool {
        let hit = matches!(self.peek(), Some(Tok::P(x)) if *x == p);
        if hit {
            self.i += 1;
        }
        hit
    }

    fn expect_p(&mut self, p: &str) -> Result<(), QueryError> {
        if self.eat_p(p) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{p}`")))
        }
    }

    fn term(&mut self) -> Result<Term, QueryError> {
        let t = self
            .peek()
            .cloned()
            .ok_or_else(|| self.err("unexpected end of input"))?;
        let pos = self.pos();
        self.i += 1;
        Ok(match t {
            Tok::Var(v) => Term::Var(v),
            Tok::Iri(i) => Term::Iri(i),
            Tok::PName(prefix, local) => Term::Node {
                prefix: Some(prefix),
                sym: match Placeholder::parse(&local) {
                    Some(p) => Sym::Hole(p),
                    None => Sym::Raw(local),
                },
            },
            Tok::Hole(p) if p.kind == PlaceholderKind::V => Term::Lit(Sym::Hole(p)),
            Tok::Hole(p) => Term::Node {
                prefix: None,
                sym: Sym::Hole(p),
            },
            Tok::Num(v) => Term::Lit(Sym::Lit(v)),
            Tok::Str(s) => Term::Lit(Sym::Lit(Value::Str(s))),
            _ => return Err(QueryError::syntax(pos, "expected a term")),
        })
    }

    fn query(&mut self) -> Result<Sparql, QueryError> {
        let mut prefixes = Vec::new();
        while self.eat_kw("prefix") {
            let name = match self.peek() {
                Some(Tok::PName(p, l)) if l.is_empty() => p.clone(),
                _ => return Err(self.err("expected prefix name")),
            };
            self.i += 1;
            let iri = match self.peek() {
                Some(Tok::Iri(i)) => i.clone(),
                _ => return Err(self.err("expected IRI")),
            };
            self.i += 1;
            prefixes.push((name, iri));
        }
        if !self.eat_kw("select") {
            return Err(self.err("expected SELECT"));
        }
        let distinct = self.eat_kw("distinct");
        let mut vars = Vec::new();
        if !self.eat_p("*") {
            while let Some(Tok::Var(v)) = self.peek() {
                vars.push(v.clone());
                self.i += 1;
            }
            if vars.is_empty() {
                return Err(self.err("expected projection"));
            }
        }
        self.eat_kw("where");
        self.expect_p("{")?;
        let mut patterns = Vec::new();
        loop {
            if self.eat_p("}") {
                break;
            }
            if self.eat_p(".") {
                continue;
            }
            if self.eat_kw("filter") {
                self.expect_p("(")?;
                let left = self.term()?;
                let op = match self.peek() {
                    Some(Tok::P("=")) => CmpOp::Eq,
                    Some(Tok::P("!=")) => CmpOp::Ne,
                    Some(Tok::P("<")) => CmpOp::Lt,
                    Some(Tok::P(">")) => CmpOp::Gt,
                    Some(Tok::P("<=")) => CmpOp::Le,
                    Some(Tok::P(">=")) => CmpOp::Ge,
                    _ => return Err(self.err("expected comparison operator")),
                };
                self.i += 1;
                let right = self.term()?;
                self.expect_p(")")?;
                patterns.push(Pattern::Filter { left, op, right });
                continue;
            }
            if self.peek().is_none() {
                return Err(self.err("unterminated group pattern"));
            }
            let s = self.term()?;
            let p = self.term()?;
            let o = self.term()?;
            patterns.push(Pattern::Triple(s, p, o));
        }
        if self.i != self.toks.len() {
            return Err(self.err("trailing input"));
        }
        Ok(Sparql {
            prefixes,
            distinct,
            vars,
            patterns,
        })
    }
}

pub fn parse(text: &str) -> Result<Sparql, QueryError> {
    Parser {
        toks: lex(text)?,
        i: 0,
        len: text.len(),
    }
    .query()
}

fn resolve_node(t: &mut Term, predicate: bool, schema: Option<&SourceSchema>) -> Result<(), QueryError> {
    match t {
        Term::Node { sym, .. } => match sym {
            Sym::Raw(local) => {
                let found = match schema {
                    Some(s) if predicate => find_relation(s, local),
                    Some(s) => find_node(s, local),
                    None => None,
                };
                match found {
                    Some(el) => *sym = Sym::Elem(el),
                    None if predicate && is_type_predicate(local) => {}
                    None if schema.is_none() => {
                        return Err(QueryError::Skeleton(format!("name `{local}` in skeleton")))
                    }
                    None => return Err(QueryError::Unresolved(local.clone())),
                }
            }
            Sym::Hole(p) => {
                let ok = if predicate {
                    p.kind == PlaceholderKind::C
                } else {
                    matches!(p.kind, PlaceholderKind::T | PlaceholderKind::E)
                };
                if !ok {
                    return Err(QueryError::Skeleton(format!("placeholder {p} in wrong position")));
                }
            }
            _ => {}
        },
        Term::Lit(_) if predicate => return Err(QueryError::Skeleton("literal in predicate position".into())),
        _ => {}
    }
    Ok(())
}

pub(crate) fn resolve(q: &mut Sparql, schema: Option<&SourceSchema>) -> Result<(), QueryError> {
    for p in &mut q.patterns {
        match p {
            Pattern::Triple(s, pr, o) => {
                resolve_node(s, false, schema)?;
                resolve_node(pr, true, schema)?;
                resolve_node(o, false, schema)?;
            }
            Pattern::Filter { left, right, .. } => {
                resolve_node(left, false, schema)?;
                resolve_node(right, false, schema)?;
            }
        }
    }
    Ok(())
}

/// Store-level identifier of a node or predicate symbol.
pub fn sym_id(s: &Sym) -> String {
    match s {
        Sym::Raw(r) => r.clone(),
        Sym::Elem(Element::Table(t)) => t.clone(),
        Sym::Elem(Element::Column { table, column }) => format!("{table}.{column}"),
        Sym::Elem(Element::Entity(e)) => e.clone(),
        Sym::Elem(other) => format!("{other:?}"),
        Sym::Lit(v) => v.to_literal(),
        Sym::Hole(p) => p.to_string(),
    }
}

impl Term {
    fn render(&self) -> String {
        match self {
            Term::Var(v) => format!("?{v}"),
            Term::Iri(i) => format!("<{i}>"),
            Term::Node { prefix: Some(p), sym } => format!("{p}:{}", sym_id(sym)),
            Term::Node { prefix: None, sym } | Term::Lit(sym) => sym_id(sym),
        }
    }

    fn sym_mut(&mut self) -> Option<&mut Sym> {
        match self {
            Term::Node { sym, .. } | Term::Lit(sym) => Some(sym),
            _ => None,
        }
    }
}

impl Sparql {
    /// `PREFIX ns: <...> SELECT DISTINCT ?x WHERE { s p o . ... }`.
    pub fn render(&self) -> String {
        let mut parts: Vec<String> = self
            .prefixes
            .iter()
            .map(|(p, iri)| format!("PREFIX {p}: <{iri}>"))
            .collect();
        let mut sel = "SELECT".to_string();
        if self.distinct {
            sel.push_str(" DISTINCT");
        }
        if self.vars.is_empty() {
            sel.push_str(" *");
        } else {
            for v in &self.vars {
                sel.push_str(&format!(" ?{v}"));
            }
        }
        parts.push(sel);
        parts.push("WHERE {".into());
        for p in &self.patterns {
            parts.push(match p {
                Pattern::Triple(s, pr, o) => {
                    format!("{} {} {} .", s.render(), pr.render(), o.render())
                }
                Pattern::Filter { left, op, right } => {
                    format!("FILTER ({} {} {})", left.render(), op.symbol(), right.render())
                }
            });
        }
        parts.push("}".into());
        parts.join(" ")
    }

    pub fn for_each_sym_mut(&mut self, f: &mut dyn FnMut(&mut Sym)) {
        for p in &mut self.patterns {
            let terms: Vec<&mut Term> = match p {
                Pattern::Triple(s, pr, o) => vec![s, pr, o],
                Pattern::Filter { left, right, .. } => vec![left, right],
            };
            for t in terms {
                if let Some(s) = t.sym_mut() {
                    f(s);
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.vars.len()
            + self
                .patterns
                .iter()
                .map(|p| match p {
                    Pattern::Triple(..) => 4,
                    Pattern::Filter { .. } => 3,
                })
                .sum::<usize>()
    }

    /// Variable names in order of first appearance (projection, then patterns).
    pub fn variables(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut add = |v: &String| {
            if !out.contains(v) {
                out.push(v.clone());
            }
        };
        self.vars.iter().for_each(&mut add);
        for p in &self.patterns {
            let terms: Vec<&Term> = match p {
                Pattern::Triple(s, pr, o) => vec![s, pr, o],
                Pattern::Filter { left, right, .. } => vec![left, right],
            };
            for t in terms {
                if let Term::Var(v) = t {
                    add(v);
                }
            }
        }
        out
    }

    pub fn rename_vars(&mut self, map: &dyn Fn(&str) -> String) {
        for v in &mut self.vars {
            *v = map(v);
        }
        for p in &mut self.patterns {
            let terms: Vec<&mut Term> = match p {
                Pattern::Triple(s, pr, o) => vec![s, pr, o],
                Pattern::Filter { left, right, .. } => vec![left, right],
            };
            for t in terms {
                if let Term::Var(v) = t {
                    *v = map(v);
                }
            }
        }
    }
}
