//! Rule-based composition of two skeletons into a deeper one.

use std::collections::HashMap;

use crate::query::sexpr::SExpr;
use crate::query::sparql::Sparql;
use crate::query::sql::{ColRef, Cond, Expr, InRhs, Select};
use crate::query::top::{TopNode, TopSlot, TopValue};
use crate::query::{Placeholder, PlaceholderKind, QueryAst, QuerySkeleton, Sym};

use super::SynthesisError;

fn fresh(kind: PlaceholderKind) -> Sym {
    // index 0 receives its own fresh index on canonicalization
    Sym::Hole(Placeholder::new(kind, 0))
}

/// Shifts every indexed hole of `ast` past the largest index of `base`, per
/// kind, so the two trees share no placeholder.
fn disjoint(base: &QueryAst, ast: &mut QueryAst) {
    let mut max: HashMap<PlaceholderKind, u32> = HashMap::new();
    for p in base.placeholders() {
        let m = max.entry(p.kind).or_insert(0);
        *m = (*m).max(p.index);
    }
    ast.for_each_sym_mut(&mut |s| {
        if let Sym::Hole(p) = s {
            if p.index > 0 {
                p.index += max.get(&p.kind).copied().unwrap_or(0);
            }
        }
    });
}

/// First top-level (AND-connected) `x IN operand` condition.
fn first_single_in(c: &mut Cond) -> Option<&mut InRhs> {
    match c {
        Cond::And(a, b) => match first_single_in(a) {
            Some(r) => Some(r),
            None => first_single_in(b),
        },
        Cond::In {
            rhs: rhs @ InRhs::Single(_),
            ..
        } => Some(rhs),
        _ => None,
    }
}

fn compose_sql(inner: Select, mut outer: Select) -> Select {
    if matches!(outer.items.as_slice(), [Expr::Col(_)]) && !inner.items.is_empty() {
        outer.items.clear();
    }
    let sub = InRhs::Sub(Box::new(inner));
    let slot = outer.where_.as_mut().and_then(first_single_in);
    match slot {
        Some(rhs) => *rhs = sub,
        None => {
            let cond = Cond::In {
                left: Expr::Col(ColRef {
                    qual: None,
                    col: fresh(PlaceholderKind::C),
                }),
                negated: false,
                rhs: sub,
            };
            outer.where_ = Some(match outer.where_.take() {
                Some(w) => Cond::And(Box::new(w), Box::new(cond)),
                None => cond,
            });
        }
    }
    outer
}

fn compose_sexpr(mut a: SExpr, b: SExpr) -> SExpr {
    match a.first_class_leaf_mut() {
        Some(leaf) => {
            *leaf = b;
            a
        }
        None => SExpr::And(vec![a, b]),
    }
}

fn compose_top(mut a: TopNode, b: TopNode) -> TopNode {
    a.slots.push(TopSlot {
        label: fresh(PlaceholderKind::C),
        value: TopValue::Intent(Box::new(b)),
    });
    a
}

fn compose_sparql(mut a: Sparql, mut b: Sparql) -> Sparql {
    let taken = a.variables();
    let anchor_a = a.vars.first().cloned().or_else(|| taken.first().cloned());
    let anchor_b = b.vars.first().cloned().or_else(|| b.variables().first().cloned());
    let mut map: HashMap<String, String> = HashMap::new();
    let mut n = 0;
    for v in b.variables() {
        let target = match (&anchor_a, &anchor_b) {
            (Some(x), Some(y)) if *y == v => x.clone(),
            _ => loop {
                n += 1;
                let cand = format!("v{n}");
                if !taken.contains(&cand) {
                    break cand;
                }
            },
        };
        map.insert(v, target);
    }
    b.rename_vars(&|v| map.get(v).cloned().unwrap_or_else(|| v.to_string()));
    for p in b.prefixes {
        if !a.prefixes.iter().any(|(q, _)| *q == p.0) {
            a.prefixes.push(p);
        }
    }
    a.patterns.extend(b.patterns);
    a
}

/// Deterministic composition of `first` and `second`:
///
/// - sexpr: `second` replaces the first class leaf of `first` (or both are
///   intersected when `first` has none);
/// - sql: `first` becomes an `IN` subquery of `second`, replacing its first
///   `col IN operand` condition or attached on a fresh column;
/// - top: `second` is nested under a fresh slot of `first`'s root intent;
/// - sparql: pattern lists are concatenated, `second`'s projected variable
///   is identified with `first`'s and its other variables renamed apart.
///
/// Placeholders of the two inputs are made disjoint, then the result is
/// renumbered canonically.
pub fn compose_rule(first: &QuerySkeleton, second: &QuerySkeleton) -> Result<QuerySkeleton, SynthesisError> {
    if first.language() != second.language() {
        return Err(SynthesisError::LanguageMismatch(first.language(), second.language()));
    }
    let a = first.tree().clone();
    let mut b = second.tree().clone();
    disjoint(&a, &mut b);
    let tree = match (a, b) {
        (QueryAst::Sql(x), QueryAst::Sql(y)) => QueryAst::Sql(compose_sql(x, y)),
        (QueryAst::Sexpr(x), QueryAst::Sexpr(y)) => QueryAst::Sexpr(compose_sexpr(x, y)),
        (QueryAst::Top(x), QueryAst::Top(y)) => QueryAst::Top(compose_top(x, y)),
        (QueryAst::Sparql(x), QueryAst::Sparql(y)) => QueryAst::Sparql(compose_sparql(x, y)),
        _ => unreachable!("languages checked above"),
    };
    Ok(QuerySkeleton::new(tree)?)
}
