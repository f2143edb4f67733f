//! SQL subset: `SELECT [DISTINCT] ... FROM ... [JOIN ... ON ...] [WHERE ...]
//! [GROUP BY ...] [ORDER BY ... [ASC|DESC]] [LIMIT n]`.

use serde::{Deserialize, Serialize};

use super::lex::{number, Cursor};
use super::{Placeholder, PlaceholderKind, QueryError, Sym};
use crate::schema::{Element, SourceSchema};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Select {
    pub distinct: bool,
    /// Empty means `*`.
    pub items: Vec<Expr>,
    pub from: Vec<FromItem>,
    pub where_: Option<Cond>,
    pub group_by: Vec<ColRef>,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JoinKind {
    Comma,
    Inner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FromItem {
    pub table: Sym,
    pub alias: Option<String>,
    /// `None` for the first item.
    pub join: Option<JoinKind>,
    pub on: Option<Cond>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Qual {
    Alias(String),
    Table(Sym),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColRef {
    pub qual: Option<Qual>,
    pub col: Sym,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub const ALL: [AggFunc; 5] = [AggFunc::Count, AggFunc::Sum, AggFunc::Avg, AggFunc::Min, AggFunc::Max];

    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "count",
            AggFunc::Sum => "sum",
            AggFunc::Avg => "avg",
            AggFunc::Min => "min",
            AggFunc::Max => "max",
        }
    }

    fn from_word(w: &str) -> Option<Self> {
        AggFunc::ALL.into_iter().find(|a| a.name().eq_ignore_ascii_case(w))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Col(ColRef),
    /// `arg = None` is `*`.
    Agg {
        func: AggFunc,
        distinct: bool,
        arg: Option<ColRef>,
    },
    Lit(Sym),
    Sub(Box<Select>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
    Like,
}

impl CmpOp {
    pub const ALL: [CmpOp; 7] = [
        CmpOp::Eq,
        CmpOp::Ne,
        CmpOp::Lt,
        CmpOp::Gt,
        CmpOp::Le,
        CmpOp::Ge,
        CmpOp::Like,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Like => "like",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InRhs {
    Sub(Box<Select>),
    List(Vec<Expr>),
    /// Bare operand, as in `[C3] IN [V1]`.
    Single(Expr),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cond {
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
    Cmp { left: Expr, op: CmpOp, right: Expr },
    In { left: Expr, negated: bool, rhs: InRhs },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderItem {
    pub expr: Expr,
    pub desc: bool,
}

// ---------------------------------------------------------------- lexing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Num(Value),
    Str(String),
    Hole(Placeholder),
    P(&'static str),
    Eof,
}

const PUNCT: [&str; 15] = [
    "<=", ">=", "!=", "<>", "=", "<", ">", "(", ")", ",", "*", ";", ".", "-", "+",
];

const RESERVED: [&str; 24] = [
    "select",
    "from",
    "where",
    "group",
    "order",
    "by",
    "limit",
    "join",
    "inner",
    "on",
    "as",
    "and",
    "or",
    "not",
    "in",
    "asc",
    "desc",
    "distinct",
    "like",
    "union",
    "intersect",
    "except",
    "having",
    "left",
];

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, QueryError> {
    let mut c = Cursor::new(src);
    let mut out = Vec::new();
    loop {
        c.skip_ws();
        let pos = c.pos;
        let Some(ch) = c.peek() else {
            out.push((Tok::Eof, pos));
            return Ok(out);
        };
        let tok = if ch == '[' {
            Tok::Hole(c.placeholder().ok_or_else(|| c.err("malformed placeholder"))?)
        } else if ch == '"' || ch == '\'' {
            Tok::Str(c.quoted()?)
        } else if ch == '`' {
            c.bump();
            let w = c.take_while(|x| x != '`').to_string();
            if !c.eat("`") {
                return Err(QueryError::syntax(pos, "unterminated quoted identifier"));
            }
            Tok::Word(w)
        } else if ch.is_ascii_digit() || (ch == '.' && c.peek_nth(1).is_some_and(|d| d.is_ascii_digit())) {
            let t = c.take_while(|x| x.is_ascii_alphanumeric() || x == '.' || x == '_');
            Tok::Num(number(t).ok_or_else(|| QueryError::syntax(pos, format!("bad number `{t}`")))?)
        } else if ch.is_alphabetic() || ch == '_' {
            Tok::Word(
                c.take_while(|x| x.is_alphanumeric() || x == '_' || x == '$')
                    .to_string(),
            )
        } else if let Some(p) = PUNCT.iter().find(|p| c.rest().starts_with(**p)) {
            c.pos += p.len();
            Tok::P(p)
        } else {
            return Err(c.err(format!("unexpected character `{ch}`")));
        };
        out.push((tok, pos));
    }
}

// ---------------------------------------------------------------- parsing

struct Parser {
    toks: Vec<(Tok, usize)>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.i + n).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> usize {
        self.toks[self.i].1
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn err(&self, msg: impl Into<String>) -> QueryError {
        QueryError::syntax(self.pos(), msg)
    }

    fn is_kw_at(&self, n: usize, kw: &str) -> bool {
        matches!(self.peek_at(n), Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    fn is_kw(&self, kw: &str) -> bool {
        self.is_kw_at(0, kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{kw}`")))
        }
    }

    fn is_p(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::P(x) if *x == p)
    }

    fn eat_p(&mut self, p: &str) -> bool {
        if self.is_p(p) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_p(&mut self, p: &str) -> Result<(), QueryError> {
        if self.eat_p(p) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{p}`")))
        }
    }

    fn select(&mut self) -> Result<Select, QueryError> {
        self.expect_kw("select")?;
        let distinct = self.eat_kw("distinct");
        let mut items = Vec::new();
        if !self.eat_p("*") {
            loop {
                items.push(self.expr()?);
                if !self.eat_p(",") {
                    break;
                }
            }
        }
        let mut from = Vec::new();
        if self.eat_kw("from") {
            from.push(self.table_ref(None)?);
            loop {
                if self.eat_p(",") {
                    from.push(self.table_ref(Some(JoinKind::Comma))?);
                } else if self.is_kw("join") || (self.is_kw("inner") && self.is_kw_at(1, "join")) {
                    self.eat_kw("inner");
                    self.next();
                    let mut item = self.table_ref(Some(JoinKind::Inner))?;
                    if self.eat_kw("on") {
                        item.on = Some(self.cond()?);
                    }
                    from.push(item);
                } else {
                    break;
                }
            }
        }
        let where_ = if self.eat_kw("where") { Some(self.cond()?) } else { None };
        let mut group_by = Vec::new();
        if self.eat_kw("group") {
            self.expect_kw("by")?;
            loop {
                match self.expr()? {
                    Expr::Col(c) => group_by.push(c),
                    _ => return Err(self.err("GROUP BY expects columns")),
                }
                if !self.eat_p(",") {
                    break;
                }
            }
        }
        let mut order_by = Vec::new();
        if self.eat_kw("order") {
            self.expect_kw("by")?;
            loop {
                let expr = self.expr()?;
                let desc = if self.eat_kw("desc") {
                    true
                } else {
                    self.eat_kw("asc");
                    false
                };
                order_by.push(OrderItem { expr, desc });
                if !self.eat_p(",") {
                    break;
                }
            }
        }
        let limit = if self.eat_kw("limit") {
            match self.next() {
                Tok::Num(Value::Int(n)) if n >= 0 => Some(n as u64),
                _ => return Err(self.err("LIMIT expects a non-negative integer")),
            }
        } else {
            None
        };
        Ok(Select {
            distinct,
            items,
            from,
            where_,
            group_by,
            order_by,
            limit,
        })
    }

    fn table_ref(&mut self, join: Option<JoinKind>) -> Result<FromItem, QueryError> {
        let table = match self.next() {
            Tok::Word(w) if !is_reserved(&w) => Sym::Raw(w),
            Tok::Hole(p) if p.kind == PlaceholderKind::T => Sym::Hole(p),
            _ => return Err(self.err("expected table name")),
        };
        let alias = if self.eat_kw("as") {
            match self.next() {
                Tok::Word(w) if !is_reserved(&w) => Some(w),
                _ => return Err(self.err("expected alias")),
            }
        } else if matches!(self.peek(), Tok::Word(w) if !is_reserved(w)) {
            match self.next() {
                Tok::Word(w) => Some(w),
                _ => unreachable!(),
            }
        } else {
            None
        };
        Ok(FromItem {
            table,
            alias,
            join,
            on: None,
        })
    }

    fn column_tail(&mut self) -> Result<Sym, QueryError> {
        match self.next() {
            Tok::Word(w) if !is_reserved(&w) => Ok(Sym::Raw(w)),
            Tok::Hole(p) if p.kind == PlaceholderKind::C => Ok(Sym::Hole(p)),
            _ => Err(self.err("expected column name")),
        }
    }

    fn col_ref(&mut self) -> Result<ColRef, QueryError> {
        match self.expr()? {
            Expr::Col(c) => Ok(c),
            _ => Err(self.err("expected column")),
        }
    }

    fn expr(&mut self) -> Result<Expr, QueryError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::P("(") if self.is_kw_at(1, "select") => {
                self.next();
                let s = self.select()?;
                self.expect_p(")")?;
                Ok(Expr::Sub(Box::new(s)))
            }
            Tok::Word(w) if AggFunc::from_word(&w).is_some() && matches!(self.peek_at(1), Tok::P("(")) => {
                self.next();
                self.next();
                let func = AggFunc::from_word(&w).unwrap();
                let distinct = self.eat_kw("distinct");
                let arg = if !distinct && self.eat_p("*") {
                    None
                } else {
                    Some(self.col_ref()?)
                };
                self.expect_p(")")?;
                Ok(Expr::Agg { func, distinct, arg })
            }
            Tok::Num(v) => {
                self.next();
                Ok(Expr::Lit(Sym::Lit(v)))
            }
            Tok::P("-") => {
                self.next();
                match self.next() {
                    Tok::Num(Value::Int(i)) => Ok(Expr::Lit(Sym::Lit(Value::Int(-i)))),
                    Tok::Num(Value::Float(f)) => Ok(Expr::Lit(Sym::Lit(Value::Float(-f)))),
                    _ => Err(QueryError::syntax(pos, "expected number after `-`")),
                }
            }
            Tok::Str(s) => {
                self.next();
                Ok(Expr::Lit(Sym::Lit(Value::Str(s))))
            }
            Tok::Word(w) if w.eq_ignore_ascii_case("null") => {
                self.next();
                Ok(Expr::Lit(Sym::Lit(Value::Null)))
            }
            Tok::Hole(p) => {
                self.next();
                match p.kind {
                    PlaceholderKind::V => Ok(Expr::Lit(Sym::Hole(p))),
                    PlaceholderKind::C => Ok(Expr::Col(ColRef {
                        qual: None,
                        col: Sym::Hole(p),
                    })),
                    PlaceholderKind::T if self.eat_p(".") => Ok(Expr::Col(ColRef {
                        qual: Some(Qual::Table(Sym::Hole(p))),
                        col: self.column_tail()?,
                    })),
                    _ => Err(QueryError::syntax(pos, format!("placeholder {p} not allowed here"))),
                }
            }
            Tok::Word(w) if !is_reserved(&w) => {
                self.next();
                if self.eat_p(".") {
                    Ok(Expr::Col(ColRef {
                        qual: Some(Qual::Table(Sym::Raw(w))),
                        col: self.column_tail()?,
                    }))
                } else {
                    Ok(Expr::Col(ColRef {
                        qual: None,
                        col: Sym::Raw(w),
                    }))
                }
            }
            _ => Err(self.err("expected expression")),
        }
    }

    fn cond(&mut self) -> Result<Cond, QueryError> {
        let mut left = self.cond_and()?;
        while self.eat_kw("or") {
            let right = self.cond_and()?;
            left = Cond::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn cond_and(&mut self) -> Result<Cond, QueryError> {
        let mut left = self.cond_atom()?;
        while self.eat_kw("and") {
            let right = self.cond_atom()?;
            left = Cond::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn cond_atom(&mut self) -> Result<Cond, QueryError> {
        if self.is_p("(") && !self.is_kw_at(1, "select") {
            self.next();
            let c = self.cond()?;
            self.expect_p(")")?;
            return Ok(c);
        }
        let left = self.expr()?;
        let negated = self.eat_kw("not");
        if negated || self.is_kw("in") {
            self.expect_kw("in")?;
            let rhs = if self.is_p("(") && self.is_kw_at(1, "select") {
                match self.expr()? {
                    Expr::Sub(s) => InRhs::Sub(s),
                    _ => unreachable!(),
                }
            } else if self.eat_p("(") {
                let mut list = vec![self.expr()?];
                while self.eat_p(",") {
                    list.push(self.expr()?);
                }
                self.expect_p(")")?;
                InRhs::List(list)
            } else {
                InRhs::Single(self.expr()?)
            };
            return Ok(Cond::In { left, negated, rhs });
        }
        let op = match self.peek() {
            Tok::P("=") => CmpOp::Eq,
            Tok::P("!=") | Tok::P("<>") => CmpOp::Ne,
            Tok::P("<") => CmpOp::Lt,
            Tok::P(">") => CmpOp::Gt,
            Tok::P("<=") => CmpOp::Le,
            Tok::P(">=") => CmpOp::Ge,
            Tok::Word(w) if w.eq_ignore_ascii_case("like") => CmpOp::Like,
            _ => return Err(self.err("expected comparison operator")),
        };
        self.next();
        let right = self.expr()?;
        Ok(Cond::Cmp { left, op, right })
    }
}

fn is_reserved(w: &str) -> bool {
    RESERVED.iter().any(|r| r.eq_ignore_ascii_case(w))
}

/// Syntax pass; schema positions hold [`Sym::Raw`] or placeholders.
pub fn parse(text: &str) -> Result<Select, QueryError> {
    let mut p = Parser { toks: lex(text)?, i: 0 };
    let s = p.select()?;
    p.eat_p(";");
    if *p.peek() != Tok::Eof {
        return Err(p.err("trailing input"));
    }
    Ok(s)
}

// ---------------------------------------------------------------- resolution

struct Scope {
    /// (alias, table symbol)
    items: Vec<(Option<String>, Sym)>,
}

fn find_table<'s>(schema: &'s SourceSchema, name: &str) -> Option<&'s crate::schema::Table> {
    let tables = schema.tables();
    tables
        .iter()
        .find(|t| t.name == name)
        .or_else(|| tables.iter().find(|t| t.name.eq_ignore_ascii_case(name)))
}

fn find_column(schema: &SourceSchema, table: &str, col: &str) -> Option<String> {
    let t = find_table(schema, table)?;
    t.columns
        .iter()
        .find(|c| *c == col)
        .or_else(|| t.columns.iter().find(|c| c.eq_ignore_ascii_case(col)))
        .cloned()
}

/// Resolves table and column names. With `schema = None` (skeleton mode) only
/// alias qualifiers are resolved and any other name is an error.
pub(crate) fn resolve(sel: &mut Select, schema: Option<&SourceSchema>) -> Result<(), QueryError> {
    for item in &mut sel.from {
        if let Sym::Raw(name) = &item.table {
            item.table = match schema {
                Some(s) => Sym::Elem(Element::Table(
                    find_table(s, name)
                        .ok_or_else(|| QueryError::Unresolved(name.clone()))?
                        .name
                        .clone(),
                )),
                None => return Err(QueryError::Skeleton(format!("table name `{name}` in skeleton"))),
            };
        }
    }
    let scope = Scope {
        items: sel.from.iter().map(|f| (f.alias.clone(), f.table.clone())).collect(),
    };
    let r = |e: &mut Expr| resolve_expr(e, &scope, schema);
    for e in &mut sel.items {
        r(e)?;
    }
    for item in &mut sel.from {
        if let Some(c) = &mut item.on {
            resolve_cond(c, &scope, schema)?;
        }
    }
    if let Some(c) = &mut sel.where_ {
        resolve_cond(c, &scope, schema)?;
    }
    for c in &mut sel.group_by {
        resolve_col(c, &scope, schema)?;
    }
    for o in &mut sel.order_by {
        r(&mut o.expr)?;
    }
    Ok(())
}

fn resolve_cond(c: &mut Cond, scope: &Scope, schema: Option<&SourceSchema>) -> Result<(), QueryError> {
    match c {
        Cond::And(a, b) | Cond::Or(a, b) => {
            resolve_cond(a, scope, schema)?;
            resolve_cond(b, scope, schema)
        }
        Cond::Cmp { left, right, .. } => {
            resolve_expr(left, scope, schema)?;
            resolve_expr(right, scope, schema)
        }
        Cond::In { left, rhs, .. } => {
            resolve_expr(left, scope, schema)?;
            match rhs {
                InRhs::Sub(s) => resolve(s, schema),
                InRhs::List(l) => l.iter_mut().try_for_each(|e| resolve_expr(e, scope, schema)),
                InRhs::Single(e) => resolve_expr(e, scope, schema),
            }
        }
    }
}

fn resolve_expr(e: &mut Expr, scope: &Scope, schema: Option<&SourceSchema>) -> Result<(), QueryError> {
    match e {
        Expr::Col(c) => resolve_col(c, scope, schema),
        Expr::Agg { arg: Some(c), .. } => resolve_col(c, scope, schema),
        Expr::Agg { arg: None, .. } | Expr::Lit(_) => Ok(()),
        Expr::Sub(s) => resolve(s, schema),
    }
}

fn resolve_col(c: &mut ColRef, scope: &Scope, schema: Option<&SourceSchema>) -> Result<(), QueryError> {
    let mut target: Option<Sym> = None;
    if let Some(Qual::Table(Sym::Raw(q))) = &c.qual {
        let q = q.clone();
        if let Some((alias, table)) = scope
            .items
            .iter()
            .find(|(a, _)| a.as_deref().is_some_and(|a| a.eq_ignore_ascii_case(&q)))
        {
            c.qual = Some(Qual::Alias(alias.clone().unwrap()));
            target = Some(table.clone());
        } else {
            let hit = scope.items.iter().find(|(_, t)| match t {
                Sym::Elem(Element::Table(name)) => name.eq_ignore_ascii_case(&q),
                _ => false,
            });
            match (hit, schema) {
                (Some((_, t)), Some(_)) => {
                    c.qual = Some(Qual::Table(t.clone()));
                    target = Some(t.clone());
                }
                (_, Some(_)) => return Err(QueryError::Unresolved(q)),
                (_, None) => return Err(QueryError::Skeleton(format!("unknown qualifier `{q}`"))),
            }
        }
    } else if let Some(Qual::Alias(a)) = &c.qual {
        target = scope
            .items
            .iter()
            .find(|(x, _)| x.as_deref() == Some(a.as_str()))
            .map(|(_, t)| t.clone());
    } else if let Some(Qual::Table(t)) = &c.qual {
        target = Some(t.clone());
    }
    let Sym::Raw(name) = &c.col else {
        return Ok(());
    };
    let Some(schema) = schema else {
        return Err(QueryError::Skeleton(format!("column name `{name}` in skeleton")));
    };
    let resolved = match &target {
        Some(Sym::Elem(Element::Table(t))) => find_column(schema, t, name).map(|col| (t.clone(), col)),
        Some(_) => None,
        None => {
            let tables: Vec<&str> = scope
                .items
                .iter()
                .filter_map(|(_, t)| match t {
                    Sym::Elem(Element::Table(n)) => Some(n.as_str()),
                    _ => None,
                })
                .collect();
            tables
                .iter()
                .find_map(|t| {
                    find_table(schema, t)
                        .and_then(|tb| tb.columns.iter().find(|x| *x == name))
                        .map(|col| (t.to_string(), col.clone()))
                })
                .or_else(|| {
                    tables
                        .iter()
                        .find_map(|t| find_column(schema, t, name).map(|col| (t.to_string(), col)))
                })
        }
    };
    match resolved {
        Some((table, column)) => {
            c.col = Sym::Elem(Element::Column { table, column });
            Ok(())
        }
        None => Err(QueryError::Unresolved(name.clone())),
    }
}

// ---------------------------------------------------------------- rendering

fn sym_text(s: &Sym) -> String {
    match s {
        Sym::Raw(r) => r.clone(),
        Sym::Elem(Element::Table(t)) => t.clone(),
        Sym::Elem(Element::Column { column, .. }) => column.clone(),
        Sym::Elem(Element::Entity(e)) => e.clone(),
        Sym::Elem(other) => format!("{other:?}"),
        Sym::Lit(v) => v.to_literal(),
        Sym::Hole(p) => p.to_string(),
    }
}

struct Render {
    upper: bool,
}

impl Render {
    fn kw(&self, k: &str) -> String {
        if self.upper {
            k.to_uppercase()
        } else {
            k.to_lowercase()
        }
    }

    fn select(&self, s: &Select) -> String {
        let mut out = self.kw("select");
        if s.distinct {
            out.push(' ');
            out.push_str(&self.kw("distinct"));
        }
        out.push(' ');
        if s.items.is_empty() {
            out.push('*');
        } else {
            let items: Vec<String> = s.items.iter().map(|e| self.expr(e)).collect();
            out.push_str(&items.join(", "));
        }
        for (i, f) in s.from.iter().enumerate() {
            match f.join {
                None if i == 0 => {
                    out.push(' ');
                    out.push_str(&self.kw("from"));
                    out.push(' ');
                }
                Some(JoinKind::Comma) | None => out.push_str(", "),
                Some(JoinKind::Inner) => {
                    out.push(' ');
                    out.push_str(&self.kw("join"));
                    out.push(' ');
                }
            }
            out.push_str(&sym_text(&f.table));
            if let Some(a) = &f.alias {
                out.push(' ');
                out.push_str(&self.kw("as"));
                out.push(' ');
                out.push_str(a);
            }
            if let Some(c) = &f.on {
                out.push(' ');
                out.push_str(&self.kw("on"));
                out.push(' ');
                out.push_str(&self.cond(c, 0));
            }
        }
        if let Some(c) = &s.where_ {
            out.push(' ');
            out.push_str(&self.kw("where"));
            out.push(' ');
            out.push_str(&self.cond(c, 0));
        }
        if !s.group_by.is_empty() {
            out.push(' ');
            out.push_str(&self.kw("group by"));
            out.push(' ');
            let g: Vec<String> = s.group_by.iter().map(|c| self.col(c)).collect();
            out.push_str(&g.join(", "));
        }
        if !s.order_by.is_empty() {
            out.push(' ');
            out.push_str(&self.kw("order by"));
            out.push(' ');
            let o: Vec<String> = s
                .order_by
                .iter()
                .map(|o| {
                    if o.desc {
                        format!("{} {}", self.expr(&o.expr), self.kw("desc"))
                    } else {
                        self.expr(&o.expr)
                    }
                })
                .collect();
            out.push_str(&o.join(", "));
        }
        if let Some(n) = s.limit {
            out.push(' ');
            out.push_str(&self.kw("limit"));
            out.push_str(&format!(" {n}"));
        }
        out
    }

    fn col(&self, c: &ColRef) -> String {
        match &c.qual {
            None => sym_text(&c.col),
            Some(Qual::Alias(a)) => format!("{a}.{}", sym_text(&c.col)),
            Some(Qual::Table(t)) => format!("{}.{}", sym_text(t), sym_text(&c.col)),
        }
    }

    fn expr(&self, e: &Expr) -> String {
        match e {
            Expr::Col(c) => self.col(c),
            Expr::Agg { func, distinct, arg } => {
                let inner = match arg {
                    None => "*".to_string(),
                    Some(c) if *distinct => format!("{} {}", self.kw("distinct"), self.col(c)),
                    Some(c) => self.col(c),
                };
                format!("{}({inner})", self.kw(func.name()))
            }
            Expr::Lit(s) => sym_text(s),
            Expr::Sub(s) => format!("({})", self.select(s)),
        }
    }

    /// `parent`: 0 top level, 1 inside OR, 2 inside AND. Right operands that
    /// share the parent's operator are parenthesized to keep the tree shape.
    fn cond(&self, c: &Cond, parent: u8) -> String {
        let (prec, text) = match c {
            Cond::Or(a, b) => (
                1,
                format!("{} {} {}", self.cond(a, 1), self.kw("or"), self.cond_right(b, 1)),
            ),
            Cond::And(a, b) => (
                2,
                format!("{} {} {}", self.cond(a, 2), self.kw("and"), self.cond_right(b, 2)),
            ),
            Cond::Cmp { left, op, right } => {
                let op = if *op == CmpOp::Like {
                    self.kw("like")
                } else {
                    op.symbol().to_string()
                };
                (3, format!("{} {op} {}", self.expr(left), self.expr(right)))
            }
            Cond::In { left, negated, rhs } => {
                let kw = if *negated {
                    format!("{} {}", self.kw("not"), self.kw("in"))
                } else {
                    self.kw("in")
                };
                let r = match rhs {
                    InRhs::Sub(s) => format!("({})", self.select(s)),
                    InRhs::List(l) => {
                        let v: Vec<String> = l.iter().map(|e| self.expr(e)).collect();
                        format!("({})", v.join(", "))
                    }
                    InRhs::Single(e) => self.expr(e),
                };
                (3, format!("{} {kw} {r}", self.expr(left)))
            }
        };
        if prec < parent {
            format!("({text})")
        } else {
            text
        }
    }

    fn cond_right(&self, c: &Cond, parent: u8) -> String {
        match (c, parent) {
            (Cond::Or(..), 1) | (Cond::And(..), 2) => format!("({})", self.cond(c, 0)),
            _ => self.cond(c, parent),
        }
    }
}

// ---------------------------------------------------------------- traversal

impl Select {
    /// `skeleton` selects upper-case keywords.
    pub fn render(&self, skeleton: bool) -> String {
        Render { upper: skeleton }.select(self)
    }

    pub fn for_each_sym_mut(&mut self, f: &mut dyn FnMut(&mut Sym)) {
        for e in &mut self.items {
            e.for_each_sym_mut(f);
        }
        for item in &mut self.from {
            f(&mut item.table);
            if let Some(c) = &mut item.on {
                c.for_each_sym_mut(f);
            }
        }
        if let Some(c) = &mut self.where_ {
            c.for_each_sym_mut(f);
        }
        for c in &mut self.group_by {
            c.for_each_sym_mut(f);
        }
        for o in &mut self.order_by {
            o.expr.for_each_sym_mut(f);
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.items.iter().map(Expr::node_count).sum::<usize>()
            + self
                .from
                .iter()
                .map(|f| 2 + f.on.as_ref().map_or(0, Cond::node_count))
                .sum::<usize>()
            + self.where_.as_ref().map_or(0, Cond::node_count)
            + self.group_by.iter().map(ColRef::node_count).sum::<usize>()
            + self.order_by.iter().map(|o| 1 + o.expr.node_count()).sum::<usize>()
    }
}

impl ColRef {
    fn for_each_sym_mut(&mut self, f: &mut dyn FnMut(&mut Sym)) {
        if let Some(Qual::Table(t)) = &mut self.qual {
            f(t);
        }
        f(&mut self.col);
    }

    fn node_count(&self) -> usize {
        1 + usize::from(matches!(self.qual, Some(Qual::Table(_))))
    }
}

impl Expr {
    fn for_each_sym_mut(&mut self, f: &mut dyn FnMut(&mut Sym)) {
        match self {
            Expr::Col(c) => c.for_each_sym_mut(f),
            Expr::Agg { arg, .. } => {
                if let Some(c) = arg {
                    c.for_each_sym_mut(f);
                }
            }
            Expr::Lit(s) => f(s),
            Expr::Sub(s) => s.for_each_sym_mut(f),
        }
    }

    fn node_count(&self) -> usize {
        match self {
            Expr::Col(c) => 1 + c.node_count(),
            Expr::Agg { arg, .. } => 1 + arg.as_ref().map_or(0, ColRef::node_count),
            Expr::Lit(_) => 2,
            Expr::Sub(s) => 1 + s.node_count(),
        }
    }
}

impl Cond {
    fn for_each_sym_mut(&mut self, f: &mut dyn FnMut(&mut Sym)) {
        match self {
            Cond::And(a, b) | Cond::Or(a, b) => {
                a.for_each_sym_mut(f);
                b.for_each_sym_mut(f);
            }
            Cond::Cmp { left, right, .. } => {
                left.for_each_sym_mut(f);
                right.for_each_sym_mut(f);
            }
            Cond::In { left, rhs, .. } => {
                left.for_each_sym_mut(f);
                match rhs {
                    InRhs::Sub(s) => s.for_each_sym_mut(f),
                    InRhs::List(l) => l.iter_mut().for_each(|e| e.for_each_sym_mut(f)),
                    InRhs::Single(e) => e.for_each_sym_mut(f),
                }
            }
        }
    }

    fn node_count(&self) -> usize {
        match self {
            Cond::And(a, b) | Cond::Or(a, b) => 1 + a.node_count() + b.node_count(),
            Cond::Cmp { left, right, .. } => 1 + left.node_count() + right.node_count(),
            Cond::In { left, rhs, .. } => {
                1 + left.node_count()
                    + match rhs {
                        InRhs::Sub(s) => 1 + s.node_count(),
                        InRhs::List(l) => 1 + l.iter().map(Expr::node_count).sum::<usize>(),
                        InRhs::Single(e) => 1 + e.node_count(),
                    }
            }
        }
    }
}
