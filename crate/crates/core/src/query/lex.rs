//! Byte cursor shared by the hand-written lexers.

use super::{Placeholder, QueryError};
use crate::value::Value;

pub(crate) struct Cursor<'a> {
    pub src: &'a str,
    pub pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(src: &'a str) -> Self {
        Cursor { src, pos: 0 }
    }

    pub fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    pub fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    pub fn peek_nth(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    pub fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    pub fn eof(&self) -> bool {
        self.pos >= self.src.len()
    }

    pub fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    pub fn take_while(&mut self, f: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        while self.peek().is_some_and(&f) {
            self.bump();
        }
        &self.src[start..self.pos]
    }

    pub fn eat(&mut self, s: &str) -> bool {
        if self.rest().starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    /// A placeholder such as `[T1]` starting at the cursor, if any.
    pub fn placeholder(&mut self) -> Option<Placeholder> {
        let rest = self.rest();
        if !rest.starts_with('[') {
            return None;
        }
        let end = rest.find(']')?;
        let p = Placeholder::parse(&rest[..=end])?;
        self.pos += end + 1;
        Some(p)
    }

    /// Quoted string with the quote doubled or backslash-escaped inside.
    pub fn quoted(&mut self) -> Result<String, QueryError> {
        let start = self.pos;
        let q = self.bump().expect("caller checked quote");
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(QueryError::syntax(start, "unterminated string")),
                Some('\\') => match self.bump() {
                    Some(c) => out.push(c),
                    None => return Err(QueryError::syntax(start, "unterminated string")),
                },
                Some(c) if c == q => {
                    if self.peek() == Some(q) {
                        self.bump();
                        out.push(q);
                    } else {
                        return Ok(out);
                    }
                }
                Some(c) => out.push(c),
            }
        }
    }

    pub fn err(&self, message: impl Into<String>) -> QueryError {
        QueryError::syntax(self.pos, message)
    }
}

/// Integer or float literal text.
pub(crate) fn number(text: &str) -> Option<Value> {
    if text.is_empty() || !text.bytes().any(|b| b.is_ascii_digit()) {
        return None;
    }
    if let Ok(i) = text.parse::<i64>() {
        return Some(Value::Int(i));
    }
    if text
        .bytes()
        .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E'))
    {
        return text.parse::<f64>().ok().filter(|f| f.is_finite()).map(Value::Float);
    }
    None
}
