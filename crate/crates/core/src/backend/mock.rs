//! Deterministic local backends for tests and smoke runs.

use super::prompt::{parse_question_prompt, parse_synthesize_prompt};
use super::{BackendError, GenReply, GenRequest, Generator};
use crate::query::sexpr::SExpr;
use crate::query::sql::{CmpOp, Cond, Expr, Select};
use crate::query::top::{element_label, TopValue};
use crate::query::{parse_skeleton, parse_syntax, render_query, Language, QueryAst, Sym};
use crate::schema::Element;
use crate::synthesis::compose_rule;
use crate::util::fnv1a64;
use crate::value::Value;

/// Always replies with the same text.
pub struct EchoGenerator {
    text: String,
}

impl EchoGenerator {
    pub fn new(text: impl Into<String>) -> Self {
        EchoGenerator { text: text.into() }
    }
}

impl Generator for EchoGenerator {
    fn id(&self) -> String {
        "echo".into()
    }

    fn generate(&self, _req: &GenRequest) -> Result<GenReply, BackendError> {
        Ok(GenReply::text(self.text.clone()))
    }
}

/// Replies with text that parses as nothing useful in any role.
pub struct GarbageGenerator;

impl Generator for GarbageGenerator {
    fn id(&self) -> String {
        "garbage".into()
    }

    fn generate(&self, req: &GenRequest) -> Result<GenReply, BackendError> {
        Ok(GenReply::text(format!(
            "%%% {:016x} ::: ((",
            fnv1a64(req.prompt.as_bytes())
        )))
    }
}

fn leaf(s: &Sym) -> String {
    match s {
        Sym::Raw(r) => r.clone(),
        Sym::Elem(Element::Table(t)) => t.clone(),
        Sym::Elem(Element::Column { column, .. }) => column.clone(),
        Sym::Elem(Element::Entity(e)) => e.clone(),
        Sym::Elem(el @ Element::Intent { .. }) => element_label(el),
        Sym::Elem(Element::Slot { slot, .. }) => slot.clone(),
        Sym::Lit(Value::Str(s)) => s.clone(),
        Sym::Lit(v) => v.to_literal(),
        Sym::Hole(p) => p.to_string(),
    }
}

fn op_words(op: CmpOp) -> &'static str {
    match op {
        CmpOp::Eq => "equal to",
        CmpOp::Ne => "not equal to",
        CmpOp::Lt => "less than",
        CmpOp::Gt => "greater than",
        CmpOp::Le => "at most",
        CmpOp::Ge => "at least",
        CmpOp::Like => "like",
    }
}

fn simple_cond(c: &Option<Cond>) -> Option<String> {
    match c {
        Some(Cond::Cmp {
            left: Expr::Col(col),
            op,
            right: Expr::Lit(v),
        }) => Some(format!("{} {} {}", leaf(&col.col), op_words(*op), leaf(v))),
        _ => None,
    }
}

fn sql_question(s: &Select) -> String {
    let table = s.from.first().map(|f| leaf(&f.table)).unwrap_or_default();
    let count_star = matches!(s.items.as_slice(), [Expr::Agg { func, arg: None, .. }] if func.name() == "count");
    if count_star && s.from.len() == 1 && s.group_by.is_empty() {
        match (&s.where_, simple_cond(&s.where_)) {
            (None, _) => return format!("How many rows of {table} are there?"),
            (Some(_), Some(c)) => return format!("How many rows of {table} have {c}?"),
            _ => {}
        }
    }
    let items: Vec<String> = s
        .items
        .iter()
        .map(|e| match e {
            Expr::Col(c) => leaf(&c.col),
            Expr::Agg { func, arg, .. } => match arg {
                Some(c) => format!("{} of {}", func.name(), leaf(&c.col)),
                None => format!("{} of rows", func.name()),
            },
            Expr::Lit(v) => leaf(v),
            Expr::Sub(_) => "nested result".into(),
        })
        .collect();
    let items = if items.is_empty() {
        "rows".to_string()
    } else {
        items.join(" and ")
    };
    let tables: Vec<String> = s.from.iter().map(|f| leaf(&f.table)).collect();
    let cond = match (&s.where_, simple_cond(&s.where_)) {
        (_, Some(c)) => format!(" whose {c}"),
        (Some(_), None) => " that meet the conditions".to_string(),
        (None, None) => String::new(),
    };
    format!("What are the {items} of {}{cond}?", tables.join(" and "))
}

/// Template question for a query, by language:
///
/// - sql, `COUNT(*)` over one table with one `column op value` filter:
///   "How many rows of <table> have <column> <op> <value>?"
/// - sql, `COUNT(*)` without a filter: "How many rows of <table> are there?"
/// - other sql: "What are the <items> of <tables>[ whose <column> <op> <value>]?"
/// - sexpr: "Which <class> satisfy <query>?" (or "What does <query> return?")
/// - sparql: "What does <query> return?"
/// - top: "Can you <intent in words>[ with <span>, ...]?"
///
/// Operators read as "equal to", "not equal to", "less than", "greater than",
/// "at most", "at least" and "like".
pub fn template_question(q: &QueryAst) -> String {
    match q {
        QueryAst::Sql(s) => sql_question(s),
        QueryAst::Sexpr(e) => match e.class_context() {
            Some(c) if !matches!(e, SExpr::Leaf(_)) => format!("Which {} satisfy {}?", leaf(c), render_query(q)),
            _ => format!("What does {} return?", render_query(q)),
        },
        QueryAst::Sparql(_) => format!("What does {} return?", render_query(q)),
        QueryAst::Top(n) => {
            let intent = leaf(&n.intent).to_lowercase().replace('_', " ");
            let spans: Vec<String> = n
                .slots
                .iter()
                .filter_map(|s| match &s.value {
                    TopValue::Span(v) => Some(leaf(v)),
                    TopValue::Intent(_) => None,
                })
                .collect();
            if spans.is_empty() {
                format!("Can you {intent}?")
            } else {
                format!("Can you {intent} with {}?", spans.join(", "))
            }
        }
    }
}

/// Question generator that applies [`template_question`] to the query found
/// in the prompt.
pub struct TemplateQuestion;

impl Generator for TemplateQuestion {
    fn id(&self) -> String {
        "template-question".into()
    }

    fn generate(&self, req: &GenRequest) -> Result<GenReply, BackendError> {
        let (query, _) =
            parse_question_prompt(&req.prompt).ok_or_else(|| BackendError::Other("not a question prompt".into()))?;
        Language::ALL
            .into_iter()
            .find_map(|l| parse_syntax(query.trim(), l).ok())
            .map(|ast| GenReply::text(template_question(&ast)))
            .ok_or_else(|| BackendError::Other(format!("cannot read query `{query}`")))
    }
}

/// Structure synthesizer that applies the rule composer to the two skeletons
/// found in the prompt.
pub struct RuleSynthesizer;

impl Generator for RuleSynthesizer {
    fn id(&self) -> String {
        "rule-synthesizer".into()
    }

    fn generate(&self, req: &GenRequest) -> Result<GenReply, BackendError> {
        let (a, b) =
            parse_synthesize_prompt(&req.prompt).ok_or_else(|| BackendError::Other("not a synthesis prompt".into()))?;
        for l in Language::ALL {
            if let (Ok(x), Ok(y)) = (parse_skeleton(a.trim(), l), parse_skeleton(b.trim(), l)) {
                let c = compose_rule(&x, &y).map_err(|e| BackendError::Other(e.to_string()))?;
                return Ok(GenReply::text(c.text()));
            }
        }
        Err(BackendError::Other("cannot read skeletons".into()))
    }
}
