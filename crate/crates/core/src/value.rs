//! Sample values carried by dataflow signals and GPIO exchanges.
//!
//! Only the three basic types cross the analog/digital boundary;
//! structured data is transmitted one basic value at a time.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Int,
    Real,
    Bool,
}

impl ValueType {
    /// Default sample of the type: 0 / 0.0 / false.
    pub fn default_value(self) -> Value {
        match self {
            ValueType::Int => Value::Int(0),
            ValueType::Real => Value::Real(0.0),
            ValueType::Bool => Value::Bool(false),
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueType::Int => "int",
            ValueType::Real => "real",
            ValueType::Bool => "bool",
        })
    }
}

/// A single sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
}

impl Value {
    pub fn value_type(&self) -> ValueType {
        match self {
            Value::Int(_) => ValueType::Int,
            Value::Real(_) => ValueType::Real,
            Value::Bool(_) => ValueType::Bool,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(v) => Some(*v),
            _ => None,
        }
    }

    /// True when the value is usable where `ty` is expected.
    pub fn matches(&self, ty: ValueType) -> bool {
        self.value_type() == ty
    }
}

/// `Display` is the trace serialization: ints in decimal, reals in
/// Rust's shortest round-trip decimal form, bools as true/false.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{}", v),
            Value::Real(v) => write!(f, "{}", v),
            Value::Bool(v) => write!(f, "{}", v),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_per_type() {
        assert_eq!(ValueType::Int.default_value(), Value::Int(0));
        assert_eq!(ValueType::Real.default_value(), Value::Real(0.0));
        assert_eq!(ValueType::Bool.default_value(), Value::Bool(false));
    }

    #[test]
    fn display_is_stable() {
        assert_eq!(Value::Int(-3).to_string(), "-3");
        assert_eq!(Value::Real(0.5).to_string(), "0.5");
        assert_eq!(Value::Real(1.0).to_string(), "1");
        assert_eq!(Value::Bool(true).to_string(), "true");
    }

    #[test]
    fn untagged_json_round_trip() {
        for v in [Value::Int(7), Value::Real(2.5), Value::Bool(false)] {
            let s = serde_json::to_string(&v).unwrap();
            let back: Value = serde_json::from_str(&s).unwrap();
            assert_eq!(back, v);
        }
    }
}
