use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A typed literal as stored in relational rows, triple objects and query text.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Int(i64),
    Float(f64),
    Str(String),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Value::Int(_) | Value::Float(_))
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Int(_) | Value::Float(_) => 1,
            Value::Str(_) => 2,
        }
    }

    /// Total order used for sorting result multisets: NULL < numbers < strings.
    /// Integers and floats compare numerically, so `Int(2) == Float(2.0)`.
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            (a, b) if a.is_numeric() && b.is_numeric() => a.as_f64().unwrap().total_cmp(&b.as_f64().unwrap()),
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }

    /// SQL-style comparison. `Ok(None)` when either side is NULL; an error
    /// when a string is compared with a number.
    pub fn sql_cmp(&self, other: &Value) -> Result<Option<Ordering>, String> {
        match (self, other) {
            (Value::Null, _) | (_, Value::Null) => Ok(None),
            (Value::Str(a), Value::Str(b)) => Ok(Some(a.cmp(b))),
            (a, b) if a.is_numeric() && b.is_numeric() => Ok(Some(a.total_cmp(b))),
            (a, b) => Err(format!("type mismatch comparing {a} with {b}")),
        }
    }

    /// Literal text for SQL, s-expression and SPARQL renderings.
    pub fn to_literal(&self) -> String {
        match self {
            Value::Null => "null".to_string(),
            Value::Int(i) => i.to_string(),
            Value::Float(f) => format!("{f:?}"),
            Value::Str(s) => format!("\"{}\"", s.replace('"', "\"\"")),
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.total_cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl std::hash::Hash for Value {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Null => {}
            Value::Int(_) | Value::Float(_) => {
                // consistent with the numeric cross-type equality
                let f = self.as_f64().unwrap();
                let f = if f == 0.0 { 0.0 } else { f };
                f.to_bits().hash(state);
            }
            Value::Str(s) => s.hash(state),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_cmp(other)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => write!(f, "NULL"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x}"),
            Value::Str(s) => write!(f, "{s}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_equality_crosses_types() {
        assert_eq!(Value::Int(2), Value::Float(2.0));
        assert!(Value::Null < Value::Int(-5));
        assert!(Value::Int(100) < Value::Str("a".into()));
    }

    #[test]
    fn sql_cmp_rejects_mixed_types() {
        assert!(Value::Str("a".into()).sql_cmp(&Value::Int(1)).is_err());
        assert_eq!(Value::Null.sql_cmp(&Value::Int(1)).unwrap(), None);
    }

    #[test]
    fn literal_rendering_round_trips_float_shape() {
        assert_eq!(Value::Float(56.0).to_literal(), "56.0");
        assert_eq!(Value::Str("a\"b".into()).to_literal(), "\"a\"\"b\"");
    }

    #[test]
    fn json_untagged_decoding() {
        let v: Vec<Value> = serde_json::from_str(r#"[null, 3, 2.5, "x"]"#).unwrap();
        assert_eq!(
            v,
            vec![Value::Null, Value::Int(3), Value::Float(2.5), Value::Str("x".into())]
        );
        assert!(matches!(v[1], Value::Int(3)));
    }
}
