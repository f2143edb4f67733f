use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::query::sql::{AggFunc, CmpOp, ColRef, Cond, Expr, InRhs, Qual, Select};
use crate::query::Sym;
use crate::schema::Element;
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreTable {
    pub name: String,
    pub columns: Vec<String>,
    #[serde(default)]
    pub rows: Vec<Vec<Value>>,
}

impl StoreTable {
    pub fn column_index(&self, col: &str) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c == col)
            .or_else(|| self.columns.iter().position(|c| c.eq_ignore_ascii_case(col)))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RelationalStore {
    pub tables: Vec<StoreTable>,
}

impl RelationalStore {
    pub fn from_json(text: &str) -> Result<Self, StoreError> {
        let s: RelationalStore = serde_json::from_str(text).map_err(|e| StoreError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        let mut names = std::collections::HashSet::new();
        for t in &self.tables {
            if !names.insert(t.name.as_str()) {
                return Err(StoreError::Invalid(format!("duplicate table `{}`", t.name)));
            }
            if let Some((i, r)) = t.rows.iter().enumerate().find(|(_, r)| r.len() != t.columns.len()) {
                return Err(StoreError::Invalid(format!(
                    "table `{}` row {i} has {} values for {} columns",
                    t.name,
                    r.len(),
                    t.columns.len()
                )));
            }
        }
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&StoreTable> {
        self.tables
            .iter()
            .find(|t| t.name == name)
            .or_else(|| self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name)))
    }

    /// Distinct non-null values of a column, sorted.
    pub fn column_values(&self, table: &str, column: &str) -> Vec<Value> {
        let Some(t) = self.table(table) else {
            return Vec::new();
        };
        let Some(i) = t.column_index(column) else {
            return Vec::new();
        };
        let mut v: Vec<Value> = t.rows.iter().map(|r| r[i].clone()).filter(|x| !x.is_null()).collect();
        v.sort();
        v.dedup();
        v
    }
}

type Row = Vec<Value>;

/// Column offsets of one FROM clause inside the concatenated row.
struct Layout<'s> {
    items: Vec<(Option<String>, &'s StoreTable, usize)>,
}

impl<'s> Layout<'s> {
    fn locate(&self, c: &ColRef) -> Result<usize, String> {
        let (table, column) = match &c.col {
            Sym::Elem(Element::Column { table, column }) => (table.as_str(), column.as_str()),
            other => return Err(format!("unresolved column {other:?}")),
        };
        let item = match &c.qual {
            Some(Qual::Alias(a)) => self.items.iter().find(|(x, _, _)| x.as_deref() == Some(a.as_str())),
            Some(Qual::Table(Sym::Elem(Element::Table(t)))) => {
                self.items.iter().find(|(_, st, _)| st.name.eq_ignore_ascii_case(t))
            }
            Some(Qual::Table(other)) => return Err(format!("unresolved qualifier {other:?}")),
            None => self.items.iter().find(|(_, st, _)| st.name.eq_ignore_ascii_case(table)),
        }
        .ok_or_else(|| format!("column `{table}.{column}` is not in scope"))?;
        let idx = item
            .1
            .column_index(column)
            .ok_or_else(|| format!("store table `{}` lacks column `{column}`", item.1.name))?;
        Ok(item.2 + idx)
    }
}

struct Eval<'s> {
    store: &'s RelationalStore,
    /// Uncorrelated subquery results keyed by node address.
    memo: RefCell<HashMap<usize, Vec<Row>>>,
}

fn lit(s: &Sym) -> Result<Value, String> {
    match s {
        Sym::Lit(v) => Ok(v.clone()),
        other => Err(format!("unfilled value {other:?}")),
    }
}

fn has_agg(e: &Expr) -> bool {
    matches!(e, Expr::Agg { .. })
}

fn like(text: &str, pat: &str) -> bool {
    fn go(t: &[char], p: &[char]) -> bool {
        match p.split_first() {
            None => t.is_empty(),
            Some(('%', rest)) => (0..=t.len()).any(|i| go(&t[i..], rest)),
            Some(('_', rest)) => !t.is_empty() && go(&t[1..], rest),
            Some((c, rest)) => t.first().is_some_and(|x| x.eq_ignore_ascii_case(c)) && go(&t[1..], rest),
        }
    }
    let t: Vec<char> = text.chars().collect();
    let p: Vec<char> = pat.chars().collect();
    go(&t, &p)
}

fn and3(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(false), _) | (_, Some(false)) => Some(false),
        (Some(true), Some(true)) => Some(true),
        _ => None,
    }
}

fn or3(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(true), _) | (_, Some(true)) => Some(true),
        (Some(false), Some(false)) => Some(false),
        _ => None,
    }
}

impl<'s> Eval<'s> {
    fn layout(&self, sel: &Select) -> Result<Layout<'s>, String> {
        let mut items = Vec::new();
        let mut off = 0;
        for f in &sel.from {
            let name = match &f.table {
                Sym::Elem(Element::Table(t)) => t,
                other => return Err(format!("unresolved table {other:?}")),
            };
            let t = self
                .store
                .table(name)
                .ok_or_else(|| format!("store has no table `{name}`"))?;
            items.push((f.alias.clone(), t, off));
            off += t.columns.len();
        }
        Ok(Layout { items })
    }

    fn subquery(&self, sel: &Select) -> Result<Vec<Row>, String> {
        let key = sel as *const Select as usize;
        if let Some(r) = self.memo.borrow().get(&key) {
            return Ok(r.clone());
        }
        let rows = self.select(sel)?;
        self.memo.borrow_mut().insert(key, rows.clone());
        Ok(rows)
    }

    fn scalar(&self, e: &Expr, lay: &Layout, row: &Row) -> Result<Value, String> {
        match e {
            Expr::Col(c) => Ok(row[lay.locate(c)?].clone()),
            Expr::Lit(s) => lit(s),
            Expr::Sub(s) => {
                let rows = self.subquery(s)?;
                Ok(rows.first().and_then(|r| r.first()).cloned().unwrap_or(Value::Null))
            }
            Expr::Agg { .. } => Err("aggregate outside of a grouped projection".into()),
        }
    }

    fn cond(&self, c: &Cond, lay: &Layout, row: &Row) -> Result<Option<bool>, String> {
        Ok(match c {
            Cond::And(a, b) => and3(self.cond(a, lay, row)?, self.cond(b, lay, row)?),
            Cond::Or(a, b) => or3(self.cond(a, lay, row)?, self.cond(b, lay, row)?),
            Cond::Cmp { left, op, right } => {
                let l = self.scalar(left, lay, row)?;
                let r = self.scalar(right, lay, row)?;
                if *op == CmpOp::Like {
                    match (&l, &r) {
                        (Value::Null, _) | (_, Value::Null) => None,
                        (Value::Str(t), Value::Str(p)) => Some(like(t, p)),
                        _ => return Err(format!("LIKE needs strings, got {l} and {r}")),
                    }
                } else {
                    l.sql_cmp(&r)?.map(|o| match op {
                        CmpOp::Eq => o == Ordering::Equal,
                        CmpOp::Ne => o != Ordering::Equal,
                        CmpOp::Lt => o == Ordering::Less,
                        CmpOp::Gt => o == Ordering::Greater,
                        CmpOp::Le => o != Ordering::Greater,
                        CmpOp::Ge => o != Ordering::Less,
                        CmpOp::Like => unreachable!(),
                    })
                }
            }
            Cond::In { left, negated, rhs } => {
                let l = self.scalar(left, lay, row)?;
                let values: Vec<Value> = match rhs {
                    InRhs::Sub(s) => {
                        let rows = self.subquery(s)?;
                        if rows.first().is_some_and(|r| r.len() != 1) {
                            return Err("IN subquery must return one column".into());
                        }
                        rows.into_iter().map(|mut r| r.remove(0)).collect()
                    }
                    InRhs::List(l) => l.iter().map(|e| self.scalar(e, lay, row)).collect::<Result<_, _>>()?,
                    InRhs::Single(e) => vec![self.scalar(e, lay, row)?],
                };
                let mut res = Some(false);
                if l.is_null() {
                    res = None;
                } else {
                    for v in &values {
                        match l.sql_cmp(v)? {
                            Some(Ordering::Equal) => {
                                res = Some(true);
                                break;
                            }
                            None => res = None,
                            Some(_) => {}
                        }
                    }
                }
                if *negated {
                    res.map(|b| !b)
                } else {
                    res
                }
            }
        })
    }

    fn aggregate(
        &self,
        func: AggFunc,
        distinct: bool,
        arg: Option<&ColRef>,
        lay: &Layout,
        group: &[&Row],
    ) -> Result<Value, String> {
        let Some(c) = arg else {
            return Ok(Value::Int(group.len() as i64));
        };
        let i = lay.locate(c)?;
        let mut vals: Vec<Value> = group.iter().map(|r| r[i].clone()).filter(|v| !v.is_null()).collect();
        if distinct {
            vals.sort();
            vals.dedup();
        }
        match func {
            AggFunc::Count => Ok(Value::Int(vals.len() as i64)),
            AggFunc::Min => Ok(vals.into_iter().min().unwrap_or(Value::Null)),
            AggFunc::Max => Ok(vals.into_iter().max().unwrap_or(Value::Null)),
            AggFunc::Sum | AggFunc::Avg => {
                if vals.is_empty() {
                    return Ok(Value::Null);
                }
                if let Some(bad) = vals.iter().find(|v| !v.is_numeric()) {
                    return Err(format!("{} over non-numeric value {bad}", func.name()));
                }
                let all_int = vals.iter().all(|v| matches!(v, Value::Int(_)));
                if func == AggFunc::Sum && all_int {
                    let mut acc: i64 = 0;
                    for v in &vals {
                        if let Value::Int(x) = v {
                            acc = acc.checked_add(*x).ok_or("integer overflow in sum")?;
                        }
                    }
                    return Ok(Value::Int(acc));
                }
                let s: f64 = vals.iter().map(|v| v.as_f64().unwrap()).sum();
                Ok(if func == AggFunc::Sum {
                    Value::Float(s)
                } else {
                    Value::Float(s / vals.len() as f64)
                })
            }
        }
    }

    fn group_value(&self, e: &Expr, lay: &Layout, group: &[&Row]) -> Result<Value, String> {
        match e {
            Expr::Agg { func, distinct, arg } => self.aggregate(*func, *distinct, arg.as_ref(), lay, group),
            // bare columns in a group take the first row's value
            other => match group.first() {
                Some(r) => self.scalar(other, lay, r),
                None => match other {
                    Expr::Col(_) => Ok(Value::Null),
                    e => self.scalar(e, lay, &Vec::new()),
                },
            },
        }
    }

    fn select(&self, sel: &Select) -> Result<Vec<Row>, String> {
        let lay = self.layout(sel)?;
        let mut rows: Vec<Row> = vec![Vec::new()];
        for (i, f) in sel.from.iter().enumerate() {
            let t = lay.items[i].1;
            let mut next = Vec::new();
            for left in &rows {
                for r in &t.rows {
                    let mut joined = left.clone();
                    joined.extend(r.iter().cloned());
                    next.push(joined);
                }
            }
            rows = next;
            if let Some(on) = &f.on {
                // ON may only see the items joined so far
                let partial = Layout {
                    items: lay.items[..=i].iter().map(|(a, t, o)| (a.clone(), *t, *o)).collect(),
                };
                let mut kept = Vec::new();
                for r in rows {
                    if self.cond(on, &partial, &r)? == Some(true) {
                        kept.push(r);
                    }
                }
                rows = kept;
            }
        }
        if let Some(w) = &sel.where_ {
            let mut kept = Vec::new();
            for r in rows {
                if self.cond(w, &lay, &r)? == Some(true) {
                    kept.push(r);
                }
            }
            rows = kept;
        }

        let grouped =
            !sel.group_by.is_empty() || sel.items.iter().any(has_agg) || sel.order_by.iter().any(|o| has_agg(&o.expr));
        let star = sel.items.is_empty();
        // (output row, sort keys)
        let mut out: Vec<(Row, Vec<Value>)> = Vec::new();
        if grouped {
            let mut groups: Vec<(Vec<Value>, Vec<&Row>)> = Vec::new();
            let key_idx: Vec<usize> = sel.group_by.iter().map(|c| lay.locate(c)).collect::<Result<_, _>>()?;
            for r in &rows {
                let key: Vec<Value> = key_idx.iter().map(|&i| r[i].clone()).collect();
                match groups.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, g)) => g.push(r),
                    None => groups.push((key, vec![r])),
                }
            }
            if groups.is_empty() && sel.group_by.is_empty() {
                groups.push((Vec::new(), Vec::new()));
            }
            for (_, g) in &groups {
                let row: Row = if star {
                    g.first().map(|r| (*r).clone()).unwrap_or_default()
                } else {
                    sel.items
                        .iter()
                        .map(|e| self.group_value(e, &lay, g))
                        .collect::<Result<_, _>>()?
                };
                let keys = sel
                    .order_by
                    .iter()
                    .map(|o| self.group_value(&o.expr, &lay, g))
                    .collect::<Result<_, _>>()?;
                out.push((row, keys));
            }
        } else {
            for r in &rows {
                let row: Row = if star {
                    r.clone()
                } else {
                    sel.items
                        .iter()
                        .map(|e| self.scalar(e, &lay, r))
                        .collect::<Result<_, _>>()?
                };
                let keys = sel
                    .order_by
                    .iter()
                    .map(|o| self.scalar(&o.expr, &lay, r))
                    .collect::<Result<_, _>>()?;
                out.push((row, keys));
            }
        }
        if !sel.order_by.is_empty() {
            out.sort_by(|(_, a), (_, b)| {
                for (i, o) in sel.order_by.iter().enumerate() {
                    let c = a[i].total_cmp(&b[i]);
                    let c = if o.desc { c.reverse() } else { c };
                    if c.is_ne() {
                        return c;
                    }
                }
                Ordering::Equal
            });
        }
        let mut result: Vec<Row> = out.into_iter().map(|(r, _)| r).collect();
        if sel.distinct {
            let mut seen: Vec<Row> = Vec::new();
            result.retain(|r| {
                if seen.contains(r) {
                    false
                } else {
                    seen.push(r.clone());
                    true
                }
            });
        }
        if let Some(n) = sel.limit {
            result.truncate(n as usize);
        }
        Ok(result)
    }
}

/// Nested-loop evaluation of a resolved SQL query.
pub fn eval_select(sel: &Select, store: &RelationalStore) -> Result<Vec<Row>, String> {
    Eval {
        store,
        memo: RefCell::new(HashMap::new()),
    }
    .select(sel)
}
