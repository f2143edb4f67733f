//! Instantiating a skeleton against a schema.
//!
//! Binding is injective per kind (distinct placeholders get distinct
//! elements), so skeletonizing the filled tree gives the skeleton back.
//! Column-like holes attach to the table-like hole they are used with, and
//! entity/value holes are drawn from the store when one is given.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::Rng;

use super::sexpr::SExpr;
use super::sparql::{is_type_predicate, Pattern, Sparql, Term};
use super::sql::{ColRef, Cond, Expr, InRhs, Qual, Select};
use super::top::{element_label, resolve_intent, TopNode, TopValue};
use super::{Placeholder, PlaceholderKind, QueryAst, QueryError, QuerySkeleton, Sym};
use crate::exec::{Obj, Store};
use crate::schema::{Element, SourceSchema};
use crate::util::rng_for;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Link {
    /// Column-like hole belongs to this table-like hole.
    Within(Placeholder),
    /// Value hole is compared against this column-like hole.
    ValueOf(Placeholder),
    /// Entity hole sits at one end of this relation hole.
    EntityOf { rel: Placeholder, subject: bool },
}

#[derive(Default)]
struct Links {
    map: HashMap<Placeholder, Link>,
}

impl Links {
    /// First link wins; later uses of the same hole are ignored.
    fn add(&mut self, child: Option<Placeholder>, link: Link) {
        if let Some(c) = child {
            self.map.entry(c).or_insert(link);
        }
    }
}

fn hole_of(s: &Sym, kind: PlaceholderKind) -> Option<Placeholder> {
    s.hole().filter(|p| p.kind == kind)
}

// ---------------------------------------------------------------- sql

fn sql_target(c: &ColRef, sel: &Select) -> Option<Placeholder> {
    let table = match &c.qual {
        Some(Qual::Alias(a)) => &sel.from.iter().find(|f| f.alias.as_deref() == Some(a.as_str()))?.table,
        Some(Qual::Table(t)) => t,
        None => &sel.from.first()?.table,
    };
    hole_of(table, PlaceholderKind::T)
}

fn sql_col(c: &ColRef, sel: &Select, links: &mut Links) {
    if let Some(t) = sql_target(c, sel) {
        links.add(hole_of(&c.col, PlaceholderKind::C), Link::Within(t));
    }
}

fn sql_expr(e: &Expr, sel: &Select, links: &mut Links) {
    match e {
        Expr::Col(c) | Expr::Agg { arg: Some(c), .. } => sql_col(c, sel, links),
        Expr::Sub(s) => sql_links(s, links),
        Expr::Agg { arg: None, .. } | Expr::Lit(_) => {}
    }
}

fn col_hole(e: &Expr) -> Option<Placeholder> {
    match e {
        Expr::Col(c) => hole_of(&c.col, PlaceholderKind::C),
        _ => None,
    }
}

fn lit_hole(e: &Expr) -> Option<Placeholder> {
    match e {
        Expr::Lit(s) => hole_of(s, PlaceholderKind::V),
        _ => None,
    }
}

fn sql_cond(c: &Cond, sel: &Select, links: &mut Links) {
    match c {
        Cond::And(a, b) | Cond::Or(a, b) => {
            sql_cond(a, sel, links);
            sql_cond(b, sel, links);
        }
        Cond::Cmp { left, right, .. } => {
            sql_expr(left, sel, links);
            sql_expr(right, sel, links);
            if let Some(col) = col_hole(left) {
                links.add(lit_hole(right), Link::ValueOf(col));
            }
            if let Some(col) = col_hole(right) {
                links.add(lit_hole(left), Link::ValueOf(col));
            }
        }
        Cond::In { left, rhs, .. } => {
            sql_expr(left, sel, links);
            let items: Vec<&Expr> = match rhs {
                InRhs::Sub(s) => {
                    sql_links(s, links);
                    Vec::new()
                }
                InRhs::List(l) => l.iter().collect(),
                InRhs::Single(e) => vec![e],
            };
            for e in items {
                sql_expr(e, sel, links);
                if let Some(col) = col_hole(left) {
                    links.add(lit_hole(e), Link::ValueOf(col));
                }
            }
        }
    }
}

fn sql_links(sel: &Select, links: &mut Links) {
    for e in &sel.items {
        sql_expr(e, sel, links);
    }
    for f in &sel.from {
        if let Some(c) = &f.on {
            sql_cond(c, sel, links);
        }
    }
    if let Some(c) = &sel.where_ {
        sql_cond(c, sel, links);
    }
    for c in &sel.group_by {
        sql_col(c, sel, links);
    }
    for o in &sel.order_by {
        sql_expr(&o.expr, sel, links);
    }
}

// ---------------------------------------------------------------- sexpr

fn leaf_hole(e: &SExpr, kind: PlaceholderKind) -> Option<Placeholder> {
    match e {
        SExpr::Leaf(s) => hole_of(s, kind),
        _ => None,
    }
}

fn context_hole(e: &SExpr) -> Option<Placeholder> {
    e.class_context().and_then(|s| hole_of(s, PlaceholderKind::T))
}

fn sexpr_links(e: &SExpr, ctx: Option<Placeholder>, links: &mut Links) {
    match e {
        SExpr::Leaf(_) => {}
        SExpr::And(xs) => {
            let ctx = context_hole(e).or(ctx);
            for x in xs {
                sexpr_links(x, ctx, links);
            }
        }
        SExpr::Join(rel, set) => {
            let (rel_hole, inverse) = match rel.as_ref() {
                SExpr::R(inner) => (leaf_hole(inner, PlaceholderKind::C), true),
                other => (leaf_hole(other, PlaceholderKind::C), false),
            };
            let owner = if inverse { context_hole(set) } else { ctx };
            if let Some(t) = owner {
                links.add(rel_hole, Link::Within(t));
            }
            if let Some(r) = rel_hole {
                links.add(
                    leaf_hole(set, PlaceholderKind::E),
                    Link::EntityOf {
                        rel: r,
                        subject: inverse,
                    },
                );
                if !inverse {
                    links.add(leaf_hole(set, PlaceholderKind::V), Link::ValueOf(r));
                }
            }
            sexpr_links(set, None, links);
        }
        SExpr::ArgMax(set, rel) | SExpr::ArgMin(set, rel) => {
            if let Some(t) = context_hole(set).or(ctx) {
                links.add(leaf_hole(rel, PlaceholderKind::C), Link::Within(t));
            }
            sexpr_links(set, ctx, links);
        }
        SExpr::Count(set) | SExpr::R(set) => sexpr_links(set, ctx, links),
    }
}

// ---------------------------------------------------------------- sparql

fn term_hole(t: &Term, kind: PlaceholderKind) -> Option<Placeholder> {
    match t {
        Term::Node { sym, .. } | Term::Lit(sym) => hole_of(sym, kind),
        _ => None,
    }
}

fn sparql_links(q: &Sparql, links: &mut Links) {
    let mut typed: HashMap<&str, Placeholder> = HashMap::new();
    for p in &q.patterns {
        if let Pattern::Triple(Term::Var(v), Term::Node { sym: Sym::Raw(pr), .. }, o) = p {
            if let (true, Some(t)) = (is_type_predicate(pr), term_hole(o, PlaceholderKind::T)) {
                typed.entry(v).or_insert(t);
            }
        }
    }
    let mut var_pred: HashMap<&str, Placeholder> = HashMap::new();
    for p in &q.patterns {
        let Pattern::Triple(s, pr, o) = p else { continue };
        let Some(c) = term_hole(pr, PlaceholderKind::C) else {
            continue;
        };
        if let Term::Var(v) = s {
            if let Some(t) = typed.get(v.as_str()) {
                links.add(Some(c), Link::Within(*t));
            }
        }
        links.add(
            term_hole(o, PlaceholderKind::E),
            Link::EntityOf { rel: c, subject: false },
        );
        links.add(
            term_hole(s, PlaceholderKind::E),
            Link::EntityOf { rel: c, subject: true },
        );
        links.add(term_hole(o, PlaceholderKind::V), Link::ValueOf(c));
        if let Term::Var(v) = o {
            var_pred.entry(v).or_insert(c);
        }
    }
    for p in &q.patterns {
        if let Pattern::Filter { left, right, .. } = p {
            for (a, b) in [(left, right), (right, left)] {
                if let Term::Var(v) = a {
                    if let Some(c) = var_pred.get(v.as_str()) {
                        links.add(term_hole(b, PlaceholderKind::V), Link::ValueOf(*c));
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------- top

fn top_links(n: &TopNode, links: &mut Links) {
    let owner = hole_of(&n.intent, PlaceholderKind::T);
    for s in &n.slots {
        if let Some(t) = owner {
            links.add(hole_of(&s.label, PlaceholderKind::C), Link::Within(t));
        }
        if let TopValue::Intent(child) = &s.value {
            top_links(child, links);
        }
    }
}

// ---------------------------------------------------------------- binding

/// Table-like candidates paired with their column-like members, sorted.
fn catalog(schema: &SourceSchema) -> BTreeMap<Element, Vec<Element>> {
    let mut out: BTreeMap<Element, Vec<Element>> = BTreeMap::new();
    match schema {
        SourceSchema::Db { tables } => {
            for t in tables {
                let cols = t
                    .columns
                    .iter()
                    .map(|c| Element::Column {
                        table: t.name.clone(),
                        column: c.clone(),
                    })
                    .collect();
                out.insert(Element::Table(t.name.clone()), cols);
            }
        }
        SourceSchema::Kg { relations, .. } => {
            for c in schema.kg_classes() {
                let cols = relations
                    .iter()
                    .filter(|r| r.domain == c)
                    .map(|r| Element::Column {
                        table: r.domain.clone(),
                        column: r.short_name().to_string(),
                    })
                    .collect();
                out.insert(Element::Table(c), cols);
            }
        }
        SourceSchema::Ds { intents } => {
            for i in intents {
                let el = Element::Intent {
                    intent: i.name.clone(),
                    suffix: None,
                };
                // only labels that read back as the same intent are usable
                if resolve_intent(&element_label(&el), schema).as_ref() != Some(&el) {
                    continue;
                }
                let slots = i
                    .slots
                    .iter()
                    .filter(|s| i.slots.iter().filter(|o| o.eq_ignore_ascii_case(s)).count() == 1)
                    .map(|s| Element::Slot {
                        intent: i.name.clone(),
                        slot: s.clone(),
                    })
                    .collect();
                out.insert(el, slots);
            }
        }
    }
    for v in out.values_mut() {
        v.sort();
    }
    out
}

fn pick<T: Clone>(rng: &mut impl Rng, xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        None
    } else {
        Some(xs[rng.random_range(0..xs.len())].clone())
    }
}

fn store_predicate(el: &Element) -> Option<String> {
    match el {
        Element::Column { table, column } => Some(format!("{table}.{column}")),
        _ => None,
    }
}

/// Entities linked through `rel` in the store, restricted to schema entities.
fn store_entities(store: Option<&Store>, rel: &Element, subject: bool, known: &BTreeSet<String>) -> Vec<String> {
    let (Some(t), Some(p)) = (store.and_then(Store::triples), store_predicate(rel)) else {
        return Vec::new();
    };
    let found: BTreeSet<String> = t
        .with_predicate(&p)
        .filter_map(|tr| match (&tr.o, subject) {
            (_, true) => Some(tr.s.clone()),
            (Obj::Node(n), false) => Some(n.clone()),
            (Obj::Lit(_), false) => None,
        })
        .filter(|n| known.contains(n))
        .collect();
    found.into_iter().collect()
}

fn store_values(store: Option<&Store>, col: &Element) -> Vec<Value> {
    match (store, col) {
        (Some(Store::Relational(r)), Element::Column { table, column }) => r.column_values(table, column),
        (Some(Store::Triples(t)), el) => {
            let Some(p) = store_predicate(el) else {
                return Vec::new();
            };
            let vals: BTreeSet<Obj> = t
                .with_predicate(&p)
                .filter(|tr| matches!(tr.o, Obj::Lit(_)))
                .map(|tr| tr.o.clone())
                .collect();
            vals.into_iter().map(|o| o.to_value()).collect()
        }
        _ => Vec::new(),
    }
}

/// Binds every placeholder of `skeleton` to a schema element or value,
/// deterministically from `seed`, and returns the instantiated tree.
pub fn fill_schema(
    skeleton: &QuerySkeleton,
    schema: &SourceSchema,
    store: Option<&Store>,
    seed: u64,
) -> Result<QueryAst, QueryError> {
    let lang = skeleton.language();
    if lang.schema_kind() != schema.kind() {
        return Err(QueryError::SchemaKindMismatch {
            lang,
            expected: lang.schema_kind(),
            got: schema.kind(),
        });
    }
    let mut links = Links::default();
    match skeleton.tree() {
        QueryAst::Sql(s) => sql_links(s, &mut links),
        QueryAst::Sexpr(e) => sexpr_links(e, None, &mut links),
        QueryAst::Sparql(q) => sparql_links(q, &mut links),
        QueryAst::Top(n) => top_links(n, &mut links),
    }
    let holes = skeleton.placeholders();
    let of_kind = |k: PlaceholderKind| holes.iter().copied().filter(move |p| p.kind == k);
    let mut rng = rng_for(seed, "fill", 0);
    let cat = catalog(schema);
    let mut bound: HashMap<Placeholder, Sym> = HashMap::new();

    // table-like holes, most demanding first
    let mut demand: HashMap<Placeholder, usize> = HashMap::new();
    for (c, l) in &links.map {
        if let (PlaceholderKind::C, Link::Within(t)) = (c.kind, l) {
            *demand.entry(*t).or_default() += 1;
        }
    }
    let mut ts: Vec<Placeholder> = of_kind(PlaceholderKind::T).collect();
    ts.sort_by_key(|t| (std::cmp::Reverse(demand.get(t).copied().unwrap_or(0)), t.index));
    let mut used_t: HashSet<Element> = HashSet::new();
    for t in ts {
        let need = demand.get(&t).copied().unwrap_or(0);
        let cands: Vec<&Element> = cat
            .iter()
            .filter(|(el, cols)| !used_t.contains(*el) && cols.len() >= need)
            .map(|(el, _)| el)
            .collect();
        let el = pick(&mut rng, &cands)
            .ok_or_else(|| QueryError::Capacity(format!("no table-like element left for {t} (needs {need} members)")))?
            .clone();
        used_t.insert(el.clone());
        bound.insert(t, Sym::Elem(el));
    }

    // column-like holes: attached ones first so free ones cannot steal members
    let mut cs: Vec<Placeholder> = of_kind(PlaceholderKind::C).collect();
    cs.sort_by_key(|c| (!matches!(links.map.get(c), Some(Link::Within(_))), c.index));
    let all_cols: Vec<Element> = {
        let mut v: Vec<Element> = cat.values().flatten().cloned().collect();
        v.sort();
        v.dedup();
        v
    };
    let mut used_c: HashSet<Element> = HashSet::new();
    for c in cs {
        let pool: Vec<&Element> = match links.map.get(&c) {
            Some(Link::Within(t)) => match &bound[t] {
                Sym::Elem(el) => cat[el].iter().collect(),
                _ => unreachable!("table-like holes are bound first"),
            },
            _ => all_cols.iter().collect(),
        };
        let cands: Vec<&Element> = pool.into_iter().filter(|e| !used_c.contains(*e)).collect();
        let el = pick(&mut rng, &cands)
            .ok_or_else(|| QueryError::Capacity(format!("no column-like element left for {c}")))?
            .clone();
        used_c.insert(el.clone());
        bound.insert(c, Sym::Elem(el));
    }

    // entities, guided by the store
    let known: BTreeSet<String> = schema.entities().iter().map(|e| e.id.clone()).collect();
    let all_entities: Vec<String> = known.iter().cloned().collect();
    let mut used_e: HashSet<String> = HashSet::new();
    for e in of_kind(PlaceholderKind::E) {
        let guided = match links.map.get(&e) {
            Some(Link::EntityOf { rel, subject }) => match &bound[rel] {
                Sym::Elem(r) => store_entities(store, r, *subject, &known),
                _ => Vec::new(),
            },
            _ => Vec::new(),
        };
        let fresh = |xs: &[String]| -> Vec<String> { xs.iter().filter(|x| !used_e.contains(*x)).cloned().collect() };
        let mut cands = fresh(&guided);
        if cands.is_empty() {
            cands = fresh(&all_entities);
        }
        let id = pick(&mut rng, &cands).ok_or_else(|| QueryError::Capacity(format!("no entity left for {e}")))?;
        used_e.insert(id.clone());
        bound.insert(e, Sym::Elem(Element::Entity(id)));
    }

    // values: store literals of the linked column, else typed defaults
    let mut used_v: HashSet<Value> = HashSet::new();
    for v in of_kind(PlaceholderKind::V) {
        let from_store = match links.map.get(&v) {
            Some(Link::ValueOf(c)) => match &bound[c] {
                Sym::Elem(col) => store_values(store, col),
                _ => Vec::new(),
            },
            _ => Vec::new(),
        };
        let cands: Vec<Value> = from_store.into_iter().filter(|x| !used_v.contains(x)).collect();
        let val = match pick(&mut rng, &cands) {
            Some(x) => x,
            None => loop {
                let n: i64 = rng.random_range(1..=100);
                let x = if lang == super::Language::Top {
                    Value::Str(format!("value {n}"))
                } else {
                    Value::Int(n)
                };
                if !used_v.contains(&x) {
                    break x;
                }
                if used_v.len() >= 100 {
                    return Err(QueryError::Capacity("too many value placeholders".into()));
                }
            },
        };
        used_v.insert(val.clone());
        bound.insert(v, Sym::Lit(val));
    }

    let mut tree = skeleton.tree().clone();
    tree.for_each_sym_mut(&mut |s| {
        if let Some(p) = s.hole() {
            *s = bound[&p].clone();
        }
    });
    Ok(tree)
}
