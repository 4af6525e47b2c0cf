//! Canonical JSON output shared by every on-disk artifact.
//!
//! Objects are emitted with sorted keys and two-space indentation, floats
//! with exactly two decimals, and the document ends with a newline. Two
//! structurally equal values always serialize to identical bytes.

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let value = serde_json::to_value(value).map_err(|e| Error::format("json value", e))?;
    let mut out = String::new();
    write_value(&mut out, &value, 0);
    out.push('\n');
    Ok(out)
}

/// Two-decimal rendering used for confidences and cohesion.
pub fn format_float(x: f64) -> String {
    format!("{x:.2}")
}

/// Rounds to the two-decimal grid used on disk.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn write_value(out: &mut String, value: &Value, depth: usize) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format_float(n.as_f64().unwrap_or(0.0)));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                indent(out, depth + 1);
                write_value(out, item, depth + 1);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            indent(out, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, key) in keys.iter().enumerate() {
                indent(out, depth + 1);
                out.push_str(&Value::String((*key).clone()).to_string());
                out.push_str(": ");
                write_value(out, &map[*key], depth + 1);
                if i + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            indent(out, depth);
            out.push('}');
        }
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn sorts_keys_and_fixes_float_width() {
        let v = json!({"b": 0.95, "a": [1, 1.0], "c": {}});
        let s = to_canonical_string(&v).unwrap();
        assert_eq!(
            s,
            "{\n  \"a\": [\n    1,\n    1.00\n  ],\n  \"b\": 0.95,\n  \"c\": {}\n}\n"
        );
    }

    #[test]
    fn two_decimal_floats_parse_back_exactly() {
        for x in [1.0, 0.95, 0.9, 0.85, 0.75, 0.6, 0.5] {
            let parsed: f64 = format_float(x).parse().unwrap();
            assert_eq!(parsed, x);
        }
    }
}
