//! Task-oriented parse trees: `[IN:LABEL [SL:LABEL span ] ... ]`.

use serde::{Deserialize, Serialize};

use super::lex::Cursor;
use super::{Placeholder, PlaceholderKind, QueryError, Sym};
use crate::schema::{intent_base, Element, SourceSchema};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopNode {
    pub intent: Sym,
    pub slots: Vec<TopSlot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopSlot {
    pub label: Sym,
    pub value: TopValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TopValue {
    /// Free-text span (a string literal) or a `V` placeholder.
    Span(Sym),
    Intent(Box<TopNode>),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    OpenIntent(String),
    OpenSlot(String),
    Close,
    Word(String),
}

fn label(c: &mut Cursor) -> Result<String, QueryError> {
    if c.peek() == Some('[') {
        return c
            .placeholder()
            .map(|p| p.to_string())
            .ok_or_else(|| c.err("malformed placeholder label"));
    }
    let l = c.take_while(|x| !x.is_whitespace() && x != ']' && x != '[');
    if l.is_empty() {
        return Err(c.err("empty label"));
    }
    Ok(l.to_string())
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, QueryError> {
    let mut c = Cursor::new(src);
    let mut out = Vec::new();
    loop {
        c.skip_ws();
        let pos = c.pos;
        if c.eof() {
            return Ok(out);
        }
        let rest = c.rest();
        let tok = if rest.len() >= 4 && rest[..4].eq_ignore_ascii_case("[IN:") {
            c.pos += 4;
            Tok::OpenIntent(label(&mut c)?)
        } else if rest.len() >= 4 && rest[..4].eq_ignore_ascii_case("[SL:") {
            c.pos += 4;
            Tok::OpenSlot(label(&mut c)?)
        } else if c.eat("]") {
            Tok::Close
        } else if let Some(p) = c.placeholder() {
            Tok::Word(p.to_string())
        } else {
            let w = c.take_while(|x| !x.is_whitespace() && x != ']');
            if w.is_empty() {
                return Err(c.err("unexpected `[`"));
            }
            Tok::Word(w.to_string())
        };
        out.push((tok, pos));
    }
}

fn label_sym(l: &str, kind: PlaceholderKind, pos: usize) -> Result<Sym, QueryError> {
    if l.starts_with('[') {
        match Placeholder::parse(l) {
            Some(p) if p.kind == kind => Ok(Sym::Hole(p)),
            _ => Err(QueryError::syntax(pos, format!("placeholder {l} in wrong position"))),
        }
    } else {
        Ok(Sym::Raw(l.to_string()))
    }
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

    fn node(&mut self) -> Result<TopNode, QueryError> {
        let pos = self.pos();
        let intent = match self.toks.get(self.i) {
            Some((Tok::OpenIntent(l), _)) => label_sym(l, PlaceholderKind::T, pos)?,
            _ => return Err(QueryError::syntax(pos, "expected `[IN:`")),
        };
        self.i += 1;
        let mut slots = Vec::new();
        loop {
            let pos = self.pos();
            match self.toks.get(self.i).cloned() {
                Some((Tok::Close, _)) => {
                    self.i += 1;
                    return Ok(TopNode { intent, slots });
                }
                Some((Tok::OpenSlot(l), _)) => {
                    self.i += 1;
                    let label = label_sym(&l, PlaceholderKind::C, pos)?;
                    let value = if matches!(self.toks.get(self.i), Some((Tok::OpenIntent(_), _))) {
                        TopValue::Intent(Box::new(self.node()?))
                    } else {
                        let mut words = Vec::new();
                        while let Some((Tok::Word(w), _)) = self.toks.get(self.i) {
                            words.push(w.clone());
                            self.i += 1;
                        }
                        match words.as_slice() {
                            [] => return Err(QueryError::syntax(self.pos(), "empty slot value")),
                            [w] if w.starts_with('[') => match Placeholder::parse(w) {
                                Some(p) if p.kind == PlaceholderKind::V => TopValue::Span(Sym::Hole(p)),
                                _ => return Err(QueryError::syntax(pos, format!("placeholder {w} in wrong position"))),
                            },
                            _ => TopValue::Span(Sym::Lit(Value::Str(words.join(" ")))),
                        }
                    };
                    if !matches!(self.toks.get(self.i), Some((Tok::Close, _))) {
                        return Err(QueryError::syntax(self.pos(), "expected `]` closing slot"));
                    }
                    self.i += 1;
                    slots.push(TopSlot { label, value });
                }
                Some(_) => return Err(QueryError::syntax(pos, "expected `[SL:` or `]`")),
                None => return Err(QueryError::syntax(pos, "unbalanced brackets")),
            }
        }
    }
}

pub fn parse(text: &str) -> Result<TopNode, QueryError> {
    let mut p = Parser {
        toks: lex(text)?,
        i: 0,
        len: text.len(),
    };
    let n = p.node()?;
    if p.i != p.toks.len() {
        return Err(QueryError::syntax(p.pos(), "trailing input"));
    }
    Ok(n)
}

/// Resolves an intent label such as `GET_MESSAGE`: an intent whose name
/// matches exactly, else the longest intent name `base` such that the label
/// is `base_suffix` with `suffix` one of that intent's slots.
pub fn resolve_intent(label: &str, schema: &SourceSchema) -> Option<Element> {
    let label = intent_base(label);
    let intents = schema.intents();
    if let Some(i) = intents
        .iter()
        .find(|i| intent_base(&i.name).eq_ignore_ascii_case(label))
    {
        return Some(Element::Intent {
            intent: i.name.clone(),
            suffix: None,
        });
    }
    let mut best: Option<(usize, Element)> = None;
    for i in intents {
        let base = intent_base(&i.name);
        if label.len() <= base.len() + 1
            || !label.is_char_boundary(base.len())
            || !label[..base.len()].eq_ignore_ascii_case(base)
            || label.as_bytes()[base.len()] != b'_'
        {
            continue;
        }
        let suffix = &label[base.len() + 1..];
        if let Some(s) = i.slots.iter().find(|s| s.eq_ignore_ascii_case(suffix)) {
            if best.as_ref().is_none_or(|(len, _)| base.len() > *len) {
                best = Some((
                    base.len(),
                    Element::Intent {
                        intent: i.name.clone(),
                        suffix: Some(s.clone()),
                    },
                ));
            }
        }
    }
    best.map(|(_, e)| e)
}

/// Label text of an intent or slot element (without the `IN:`/`SL:` tag).
pub fn element_label(el: &Element) -> String {
    match el {
        Element::Intent { intent, suffix } => {
            let base = intent_base(intent).to_uppercase();
            match suffix {
                Some(s) => format!("{base}_{}", s.to_uppercase()),
                None => base,
            }
        }
        Element::Slot { slot, .. } => slot.to_uppercase(),
        Element::Table(t) => t.to_uppercase(),
        Element::Column { column, .. } => column.to_uppercase(),
        Element::Entity(e) => e.clone(),
    }
}

fn slot_of(intent: &str, label: &str, schema: &SourceSchema) -> Option<Element> {
    let i = schema.intents().iter().find(|i| i.name == intent)?;
    i.slots
        .iter()
        .find(|s| s.eq_ignore_ascii_case(label))
        .map(|s| Element::Slot {
            intent: intent.to_string(),
            slot: s.clone(),
        })
}

/// With a schema, intent labels must resolve; slot labels resolve when they
/// name a slot of the enclosing intent and otherwise stay free.
pub(crate) fn resolve(n: &mut TopNode, schema: Option<&SourceSchema>) -> Result<(), QueryError> {
    if let Sym::Raw(l) = &n.intent {
        let Some(schema) = schema else {
            return Err(QueryError::Skeleton(format!("intent `{l}` in skeleton")));
        };
        n.intent = Sym::Elem(resolve_intent(l, schema).ok_or_else(|| QueryError::Unresolved(format!("IN:{l}")))?);
    }
    let group = match &n.intent {
        Sym::Elem(Element::Intent { intent, .. }) => Some(intent.clone()),
        _ => None,
    };
    for s in &mut n.slots {
        if let (Sym::Raw(l), Some(schema), Some(g)) = (&s.label, schema, &group) {
            if let Some(el) = slot_of(g, l, schema) {
                s.label = Sym::Elem(el);
            }
        }
        if let TopValue::Intent(child) = &mut s.value {
            resolve(child, schema)?;
        }
    }
    Ok(())
}

fn sym_text(s: &Sym) -> String {
    match s {
        Sym::Raw(r) => r.clone(),
        Sym::Elem(e) => element_label(e),
        Sym::Lit(Value::Str(t)) => t.clone(),
        Sym::Lit(v) => v.to_string(),
        Sym::Hole(p) => p.to_string(),
    }
}

impl TopNode {
    pub fn render(&self) -> String {
        let mut out = format!("[IN:{} ", sym_text(&self.intent));
        for s in &self.slots {
            out.push_str(&format!("[SL:{} ", sym_text(&s.label)));
            match &s.value {
                TopValue::Span(v) => out.push_str(&sym_text(v)),
                TopValue::Intent(n) => out.push_str(&n.render()),
            }
            out.push_str(" ] ");
        }
        out.push(']');
        out
    }

    pub fn for_each_sym_mut(&mut self, f: &mut dyn FnMut(&mut Sym)) {
        f(&mut self.intent);
        for s in &mut self.slots {
            f(&mut s.label);
            match &mut s.value {
                TopValue::Span(v) => f(v),
                TopValue::Intent(n) => n.for_each_sym_mut(f),
            }
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self
            .slots
            .iter()
            .map(|s| {
                2 + match &s.value {
                    TopValue::Span(_) => 1,
                    TopValue::Intent(n) => n.node_count(),
                }
            })
            .sum::<usize>()
    }
}
