use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::StoreError;
use crate::query::sexpr::SExpr;
use crate::query::sparql::{sym_id, Pattern, Sparql, Term, TYPE_PREDICATE};
use crate::query::sql::CmpOp;
use crate::query::Sym;
use crate::schema::{Element, SourceSchema};
use crate::value::Value;

/// Triple object: an entity/class node or a literal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Obj {
    Node(String),
    Lit(Value),
}

impl Obj {
    pub fn to_value(&self) -> Value {
        match self {
            Obj::Node(n) => Value::Str(n.clone()),
            Obj::Lit(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Triple {
    pub s: String,
    pub p: String,
    pub o: Obj,
}

/// Deduplicated triples in insertion order with a predicate index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TripleStore {
    triples: Vec<Triple>,
    by_pred: HashMap<String, Vec<usize>>,
}

impl TripleStore {
    pub fn new(triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut s = TripleStore::default();
        let mut seen = HashSet::new();
        for t in triples {
            if seen.insert(t.clone()) {
                s.by_pred.entry(t.p.clone()).or_default().push(s.triples.len());
                s.triples.push(t);
            }
        }
        s
    }

    /// One JSON object per line: `{"s":..,"p":..,"o":..}`. A string object
    /// is a node, a number a literal, `{"lit": x}` a literal of any type.
    pub fn from_jsonl(text: &str) -> Result<Self, StoreError> {
        let mut triples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| StoreError::Parse {
                line: i + 1,
                message: m,
            };
            let v: Json = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            let field = |k: &str| {
                v.get(k)
                    .and_then(Json::as_str)
                    .map(str::to_string)
                    .ok_or_else(|| err(format!("missing string field `{k}`")))
            };
            let s = field("s")?;
            let p = field("p")?;
            let o = match v.get("o") {
                Some(Json::String(n)) => Obj::Node(n.clone()),
                Some(n @ Json::Number(_)) => {
                    Obj::Lit(serde_json::from_value(n.clone()).map_err(|e| err(e.to_string()))?)
                }
                Some(Json::Object(m)) if m.contains_key("lit") => {
                    Obj::Lit(serde_json::from_value(m["lit"].clone()).map_err(|e| err(e.to_string()))?)
                }
                _ => return Err(err("field `o` must be a string, number or {\"lit\": ...}".into())),
            };
            if p == TYPE_PREDICATE && !matches!(o, Obj::Node(_)) {
                return Err(err("type assertion with a literal class".into()));
            }
            triples.push(Triple { s, p, o });
        }
        Ok(TripleStore::new(triples))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            let o = match &t.o {
                Obj::Node(n) => Json::String(n.clone()),
                Obj::Lit(v @ (Value::Int(_) | Value::Float(_))) => serde_json::to_value(v).unwrap(),
                Obj::Lit(v) => serde_json::json!({ "lit": v }),
            };
            out.push_str(&serde_json::json!({"s": t.s, "p": t.p, "o": o}).to_string());
            out.push('\n');
        }
        out
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn with_predicate<'a>(&'a self, p: &str) -> impl Iterator<Item = &'a Triple> + 'a {
        self.by_pred
            .get(p)
            .into_iter()
            .flatten()
            .map(move |&i| &self.triples[i])
    }

    /// Every typed node's class must be a class of `schema`.
    pub fn validate_against(&self, schema: &SourceSchema) -> Result<(), StoreError> {
        let classes: HashSet<String> = schema.kg_classes().into_iter().collect();
        for t in self.with_predicate(TYPE_PREDICATE) {
            if let Obj::Node(c) = &t.o {
                if !classes.contains(c) {
                    return Err(StoreError::Invalid(format!("`{}` typed by unknown class `{c}`", t.s)));
                }
            }
        }
        Ok(())
    }

    pub fn instances(&self, class: &str) -> BTreeSet<Obj> {
        self.with_predicate(TYPE_PREDICATE)
            .filter(|t| t.o == Obj::Node(class.to_string()))
            .map(|t| Obj::Node(t.s.clone()))
            .collect()
    }
}

fn relation_id(e: &SExpr) -> Result<(String, bool), String> {
    match e {
        SExpr::Leaf(s @ Sym::Elem(Element::Column { .. })) => Ok((sym_id(s), false)),
        SExpr::Leaf(Sym::Raw(r)) if r == TYPE_PREDICATE => Ok((r.clone(), false)),
        SExpr::R(inner) => relation_id(inner).map(|(p, inv)| (p, !inv)),
        other => Err(format!("expected a relation, got {}", other.render())),
    }
}

fn eval_set(e: &SExpr, store: &TripleStore) -> Result<BTreeSet<Obj>, String> {
    match e {
        SExpr::Leaf(Sym::Elem(Element::Table(c))) => Ok(store.instances(c)),
        SExpr::Leaf(Sym::Elem(Element::Entity(id))) => Ok(BTreeSet::from([Obj::Node(id.clone())])),
        SExpr::Leaf(Sym::Lit(v)) => Ok(BTreeSet::from([Obj::Lit(v.clone())])),
        SExpr::Leaf(other) => Err(format!("unresolved leaf {other:?}")),
        SExpr::And(xs) => {
            let mut acc: Option<BTreeSet<Obj>> = None;
            for x in xs {
                let s = eval_set(x, store)?;
                acc = Some(match acc {
                    None => s,
                    Some(a) => a.intersection(&s).cloned().collect(),
                });
            }
            Ok(acc.unwrap_or_default())
        }
        SExpr::Join(rel, set) => {
            let (p, inverse) = relation_id(rel)?;
            let target = eval_set(set, store)?;
            Ok(store
                .with_predicate(&p)
                .filter_map(|t| {
                    if inverse {
                        target.contains(&Obj::Node(t.s.clone())).then(|| t.o.clone())
                    } else {
                        target.contains(&t.o).then(|| Obj::Node(t.s.clone()))
                    }
                })
                .collect())
        }
        SExpr::ArgMax(set, rel) | SExpr::ArgMin(set, rel) => {
            let max = matches!(e, SExpr::ArgMax(..));
            let (p, inverse) = relation_id(rel)?;
            if inverse {
                return Err("ARGMAX/ARGMIN over an inverse relation".into());
            }
            let members = eval_set(set, store)?;
            let mut best: Option<f64> = None;
            let mut winners = BTreeSet::new();
            for t in store.with_predicate(&p) {
                let subj = Obj::Node(t.s.clone());
                let Some(x) = (match &t.o {
                    Obj::Lit(v) => v.as_f64(),
                    Obj::Node(_) => None,
                }) else {
                    continue;
                };
                if !members.contains(&subj) {
                    continue;
                }
                let better = best.is_none_or(|b| if max { x > b } else { x < b });
                if better {
                    best = Some(x);
                    winners.clear();
                }
                if best == Some(x) {
                    winners.insert(subj);
                }
            }
            Ok(winners)
        }
        SExpr::Count(set) => Ok(BTreeSet::from([Obj::Lit(Value::Int(
            eval_set(set, store)?.len() as i64
        ))])),
        SExpr::R(_) => Err("R outside a relation position".into()),
    }
}

/// Bottom-up evaluation; one row per answer, in sorted order.
pub fn eval_sexpr(e: &SExpr, store: &TripleStore) -> Result<Vec<Vec<Value>>, String> {
    Ok(eval_set(e, store)?.into_iter().map(|o| vec![o.to_value()]).collect())
}

fn term_obj(t: &Term) -> Result<Option<Obj>, String> {
    Ok(match t {
        Term::Var(_) => None,
        Term::Iri(i) => Some(Obj::Node(i.clone())),
        Term::Node { sym: Sym::Hole(p), .. } | Term::Lit(Sym::Hole(p)) => {
            return Err(format!("unfilled placeholder {p}"))
        }
        Term::Node { sym, .. } => Some(Obj::Node(sym_id(sym))),
        Term::Lit(Sym::Lit(v)) => Some(Obj::Lit(v.clone())),
        Term::Lit(other) => return Err(format!("bad literal {other:?}")),
    })
}

type Binding = HashMap<String, Obj>;

fn unify(t: &Term, val: &Obj, b: &mut Binding) -> Result<bool, String> {
    if let Term::Var(v) = t {
        return Ok(match b.get(v) {
            Some(x) => x == val,
            None => {
                b.insert(v.clone(), val.clone());
                true
            }
        });
    }
    Ok(term_obj(t)?.as_ref() == Some(val))
}

fn filter_value(t: &Term, b: &Binding) -> Result<Option<Value>, String> {
    Ok(match t {
        Term::Var(v) => b.get(v).map(Obj::to_value),
        other => term_obj(other)?.map(|o| o.to_value()),
    })
}

/// Conjunctive pattern matching followed by filters and projection.
pub fn eval_sparql(q: &Sparql, store: &TripleStore) -> Result<Vec<Vec<Value>>, String> {
    let mut sols: Vec<Binding> = vec![Binding::new()];
    for p in &q.patterns {
        let Pattern::Triple(s, pr, o) = p else { continue };
        let pred = match pr {
            Term::Var(_) => None,
            other => match term_obj(other)? {
                Some(Obj::Node(n)) => Some(n),
                _ => return Err("literal predicate".into()),
            },
        };
        let candidates: Vec<&Triple> = match &pred {
            Some(p) => store.with_predicate(p).collect(),
            None => store.triples().iter().collect(),
        };
        let mut next = Vec::new();
        for b in &sols {
            for t in &candidates {
                let mut nb = b.clone();
                if unify(s, &Obj::Node(t.s.clone()), &mut nb)?
                    && unify(pr, &Obj::Node(t.p.clone()), &mut nb)?
                    && unify(o, &t.o, &mut nb)?
                {
                    next.push(nb);
                }
            }
        }
        sols = next;
    }
    let mut kept = Vec::new();
    'sol: for b in sols {
        for p in &q.patterns {
            if let Pattern::Filter { left, op, right } = p {
                let (Some(l), Some(r)) = (filter_value(left, &b)?, filter_value(right, &b)?) else {
                    continue 'sol;
                };
                let pass = match l.sql_cmp(&r) {
                    Ok(Some(o)) => match op {
                        CmpOp::Eq => o.is_eq(),
                        CmpOp::Ne => o.is_ne(),
                        CmpOp::Lt => o.is_lt(),
                        CmpOp::Gt => o.is_gt(),
                        CmpOp::Le => o.is_le(),
                        CmpOp::Ge => o.is_ge(),
                        CmpOp::Like => false,
                    },
                    _ => false,
                };
                if !pass {
                    continue 'sol;
                }
            }
        }
        kept.push(b);
    }
    let vars = if q.vars.is_empty() {
        q.variables()
    } else {
        q.vars.clone()
    };
    let mut rows: Vec<Vec<Value>> = kept
        .iter()
        .map(|b| {
            vars.iter()
                .map(|v| b.get(v).map_or(Value::Null, Obj::to_value))
                .collect()
        })
        .collect();
    if q.distinct {
        let mut seen = HashSet::new();
        rows.retain(|r| seen.insert(r.clone()));
    }
    Ok(rows)
}
