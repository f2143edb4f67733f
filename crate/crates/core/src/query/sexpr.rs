//! S-expression logical forms over a knowledge graph:
//! `AND`, `JOIN`, `R`, `ARGMAX`, `ARGMIN`, `COUNT` with class, relation,
//! entity and literal leaves.

use serde::{Deserialize, Serialize};

use super::lex::{number, Cursor};
use super::{Placeholder, PlaceholderKind, QueryError, Sym};
use crate::schema::{Element, SourceSchema};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SExpr {
    Leaf(Sym),
    /// Intersection of two or more sets.
    And(Vec<SExpr>),
    /// `(JOIN rel set)`: subjects `x` with `(x, rel, y)` for some `y` in `set`.
    Join(Box<SExpr>, Box<SExpr>),
    /// Inverse relation.
    R(Box<SExpr>),
    ArgMax(Box<SExpr>, Box<SExpr>),
    ArgMin(Box<SExpr>, Box<SExpr>),
    Count(Box<SExpr>),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
    Quoted(String),
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, QueryError> {
    let mut c = Cursor::new(src);
    let mut out = Vec::new();
    loop {
        c.skip_ws();
        let pos = c.pos;
        match c.peek() {
            None => return Ok(out),
            Some('(') => {
                c.bump();
                out.push((Tok::Open, pos));
            }
            Some(')') => {
                c.bump();
                out.push((Tok::Close, pos));
            }
            Some('"') => out.push((Tok::Quoted(c.quoted()?), pos)),
            Some(_) => {
                let a = c.take_while(|x| !x.is_whitespace() && x != '(' && x != ')');
                out.push((Tok::Atom(a.to_string()), pos));
            }
        }
    }
}

fn leaf(atom: &str, pos: usize) -> Result<Sym, QueryError> {
    if atom.starts_with('[') {
        return Placeholder::parse(atom)
            .map(Sym::Hole)
            .ok_or_else(|| QueryError::syntax(pos, format!("malformed placeholder `{atom}`")));
    }
    if let Some((lexical, _ty)) = atom.split_once("^^") {
        let lexical = lexical.trim_matches('"');
        return Ok(Sym::Lit(
            number(lexical).unwrap_or_else(|| Value::Str(lexical.to_string())),
        ));
    }
    if let Some(v) = number(atom) {
        return Ok(Sym::Lit(v));
    }
    Ok(Sym::Raw(atom.to_string()))
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    i: usize,
    len: usize,
}

impl Parser {
    fn pos(&self) -> usize {
        self.toks.get(self.i).map_or(self.len, |t| t.1)
    }

    fn expr(&mut self) -> Result<SExpr, QueryError> {
        let pos = self.pos();
        let Some((tok, _)) = self.toks.get(self.i).cloned() else {
            return Err(QueryError::syntax(pos, "unexpected end of input"));
        };
        self.i += 1;
        match tok {
            Tok::Atom(a) => Ok(SExpr::Leaf(leaf(&a, pos)?)),
            Tok::Quoted(s) => Ok(SExpr::Leaf(Sym::Lit(Value::Str(s)))),
            Tok::Close => Err(QueryError::syntax(pos, "unexpected `)`")),
            Tok::Open => {
                let op_pos = self.pos();
                let op = match self.toks.get(self.i) {
                    Some((Tok::Atom(a), _)) => a.to_ascii_uppercase(),
                    _ => return Err(QueryError::syntax(op_pos, "expected operator")),
                };
                self.i += 1;
                let mut args = Vec::new();
                while !matches!(self.toks.get(self.i), Some((Tok::Close, _)) | None) {
                    args.push(self.expr()?);
                }
                if self.toks.get(self.i).is_none() {
                    return Err(QueryError::syntax(self.len, "unbalanced parentheses"));
                }
                self.i += 1;
                let arity = |n: usize| -> Result<(), QueryError> {
                    if args.len() == n {
                        Ok(())
                    } else {
                        Err(QueryError::syntax(
                            op_pos,
                            format!("{op} takes {n} argument(s), got {}", args.len()),
                        ))
                    }
                };
                let two = |args: &mut Vec<SExpr>| {
                    let b = args.pop().unwrap();
                    let a = args.pop().unwrap();
                    (Box::new(a), Box::new(b))
                };
                match op.as_str() {
                    "AND" => {
                        if args.len() < 2 {
                            return Err(QueryError::syntax(op_pos, "AND takes at least 2 arguments"));
                        }
                        Ok(SExpr::And(args))
                    }
                    "JOIN" => {
                        arity(2)?;
                        let (a, b) = two(&mut args);
                        Ok(SExpr::Join(a, b))
                    }
                    "ARGMAX" | "ARGMIN" => {
                        arity(2)?;
                        let (a, b) = two(&mut args);
                        Ok(if op == "ARGMAX" {
                            SExpr::ArgMax(a, b)
                        } else {
                            SExpr::ArgMin(a, b)
                        })
                    }
                    "R" => {
                        arity(1)?;
                        Ok(SExpr::R(Box::new(args.pop().unwrap())))
                    }
                    "COUNT" => {
                        arity(1)?;
                        Ok(SExpr::Count(Box::new(args.pop().unwrap())))
                    }
                    other => Err(QueryError::syntax(op_pos, format!("unknown operator `{other}`"))),
                }
            }
        }
    }
}

pub fn parse(text: &str) -> Result<SExpr, QueryError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        i: 0,
        len: text.len(),
    };
    let e = p.expr()?;
    if p.i != p.toks.len() {
        return Err(QueryError::syntax(p.pos(), "trailing input"));
    }
    Ok(e)
}

/// Relation lookup by fully qualified id or by declared name.
pub(crate) fn find_relation(schema: &SourceSchema, tok: &str) -> Option<Element> {
    let rels = schema.relations();
    let hit = rels.iter().find(|r| r.full_id() == tok || r.name == tok).or_else(|| {
        rels.iter()
            .find(|r| r.full_id().eq_ignore_ascii_case(tok) || r.name.eq_ignore_ascii_case(tok))
    })?;
    Some(Element::Column {
        table: hit.domain.clone(),
        column: hit.short_name().to_string(),
    })
}

/// Class first, then entity.
pub(crate) fn find_node(schema: &SourceSchema, tok: &str) -> Option<Element> {
    let classes = schema.kg_classes();
    if let Some(c) = classes
        .iter()
        .find(|c| *c == tok)
        .or_else(|| classes.iter().find(|c| c.eq_ignore_ascii_case(tok)))
    {
        return Some(Element::Table(c.clone()));
    }
    let ents = schema.entities();
    ents.iter()
        .find(|e| e.id == tok)
        .or_else(|| ents.iter().find(|e| e.id.eq_ignore_ascii_case(tok)))
        .map(|e| Element::Entity(e.id.clone()))
}

fn resolve_leaf(s: &mut Sym, rel: bool, schema: Option<&SourceSchema>) -> Result<(), QueryError> {
    match s {
        Sym::Raw(tok) => {
            let Some(schema) = schema else {
                return Err(QueryError::Skeleton(format!("name `{tok}` in skeleton")));
            };
            let el = if rel {
                find_relation(schema, tok)
            } else {
                find_node(schema, tok)
            };
            *s = Sym::Elem(el.ok_or_else(|| QueryError::Unresolved(tok.clone()))?);
        }
        Sym::Hole(p) => {
            let ok = if rel {
                p.kind == PlaceholderKind::C
            } else {
                p.kind != PlaceholderKind::C
            };
            if !ok {
                return Err(QueryError::Skeleton(format!("placeholder {p} in wrong position")));
            }
        }
        Sym::Lit(_) if rel => return Err(QueryError::Skeleton("literal in relation position".into())),
        _ => {}
    }
    Ok(())
}

pub(crate) fn resolve(e: &mut SExpr, schema: Option<&SourceSchema>) -> Result<(), QueryError> {
    resolve_at(e, false, schema)
}

fn resolve_at(e: &mut SExpr, rel: bool, schema: Option<&SourceSchema>) -> Result<(), QueryError> {
    if rel && !matches!(e, SExpr::R(_) | SExpr::Leaf(_)) {
        return Err(QueryError::syntax(0, "expected a relation"));
    }
    match e {
        SExpr::Leaf(s) => resolve_leaf(s, rel, schema),
        SExpr::R(r) => {
            if !rel {
                return Err(QueryError::syntax(0, "R outside a relation position"));
            }
            resolve_at(r, true, schema)
        }
        SExpr::And(xs) => xs.iter_mut().try_for_each(|x| resolve_at(x, false, schema)),
        SExpr::Join(r, s) => {
            resolve_at(r, true, schema)?;
            resolve_at(s, false, schema)
        }
        SExpr::ArgMax(s, r) | SExpr::ArgMin(s, r) => {
            resolve_at(s, false, schema)?;
            resolve_at(r, true, schema)
        }
        SExpr::Count(s) => resolve_at(s, false, schema),
    }
}

fn sym_text(s: &Sym) -> String {
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

impl SExpr {
    pub fn render(&self) -> String {
        let call = |op: &str, args: &[&SExpr]| {
            let parts: Vec<String> = args.iter().map(|a| a.render()).collect();
            format!("({op} {})", parts.join(" "))
        };
        match self {
            SExpr::Leaf(s) => sym_text(s),
            SExpr::And(xs) => call("AND", &xs.iter().collect::<Vec<_>>()),
            SExpr::Join(a, b) => call("JOIN", &[a, b]),
            SExpr::R(a) => call("R", &[a]),
            SExpr::ArgMax(a, b) => call("ARGMAX", &[a, b]),
            SExpr::ArgMin(a, b) => call("ARGMIN", &[a, b]),
            SExpr::Count(a) => call("COUNT", &[a]),
        }
    }

    pub fn for_each_sym_mut(&mut self, f: &mut dyn FnMut(&mut Sym)) {
        match self {
            SExpr::Leaf(s) => f(s),
            SExpr::And(xs) => xs.iter_mut().for_each(|x| x.for_each_sym_mut(f)),
            SExpr::Join(a, b) | SExpr::ArgMax(a, b) | SExpr::ArgMin(a, b) => {
                a.for_each_sym_mut(f);
                b.for_each_sym_mut(f);
            }
            SExpr::R(a) | SExpr::Count(a) => a.for_each_sym_mut(f),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            SExpr::Leaf(_) => 1,
            SExpr::And(xs) => 1 + xs.iter().map(SExpr::node_count).sum::<usize>(),
            SExpr::Join(a, b) | SExpr::ArgMax(a, b) | SExpr::ArgMin(a, b) => 1 + a.node_count() + b.node_count(),
            SExpr::R(a) | SExpr::Count(a) => 1 + a.node_count(),
        }
    }

    /// The class a set expression is typed by: a class leaf itself, the first
    /// typed conjunct of an `AND`, or the set under `ARGMAX`/`ARGMIN`.
    pub fn class_context(&self) -> Option<&Sym> {
        match self {
            SExpr::Leaf(s @ Sym::Elem(Element::Table(_))) => Some(s),
            SExpr::Leaf(s @ Sym::Hole(p)) if p.kind == PlaceholderKind::T => Some(s),
            SExpr::And(xs) => xs.iter().find_map(SExpr::class_context),
            SExpr::ArgMax(s, _) | SExpr::ArgMin(s, _) => s.class_context(),
            _ => None,
        }
    }

    /// First class-position leaf (`T` placeholder or class) in textual order.
    pub(crate) fn first_class_leaf_mut(&mut self) -> Option<&mut SExpr> {
        match self {
            SExpr::Leaf(Sym::Hole(p)) if p.kind == PlaceholderKind::T => Some(self),
            SExpr::Leaf(Sym::Elem(Element::Table(_))) => Some(self),
            SExpr::Leaf(_) | SExpr::R(_) => None,
            SExpr::And(xs) => xs.iter_mut().find_map(SExpr::first_class_leaf_mut),
            SExpr::Join(_, s) | SExpr::Count(s) => s.first_class_leaf_mut(),
            SExpr::ArgMax(s, _) | SExpr::ArgMin(s, _) => s.first_class_leaf_mut(),
        }
    }
}
