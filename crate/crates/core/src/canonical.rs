//! Canonical document format.
//!
//! Documents are rendered as indented JSON text with object keys in sorted
//! (byte-lexicographic) order and every floating-point number rounded to nine
//! significant digits. Integers are written verbatim. The output of
//! [`canonical_serialize`] is a pure function of the value, so two
//! serializations of the same document are byte-equal and golden files diff
//! cleanly.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CanonicalError {
    #[error("value cannot be represented canonically: {0}")]
    Encode(String),
    #[error("non-finite number at {path}")]
    NonFinite { path: String },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
}

/// Round `x` to nine significant digits, the precision of the canonical format.
pub fn canonical_f64(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        // normalizes -0.0 as well
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

fn render_f64(x: f64) -> String {
    let q = canonical_f64(x);
    if q == 0.0 {
        return "0.0".to_string();
    }
    let mag = q.abs();
    if (1e-4..1e15).contains(&mag) {
        let s = format!("{q}");
        if s.contains('.') {
            s
        } else {
            format!("{s}.0")
        }
    } else {
        format!("{q:e}")
    }
}

fn write_string(out: &mut String, s: &str) {
    // serde_json's escaping is already canonical (minimal escapes, UTF-8 passthrough)
    out.push_str(&serde_json::to_string(s).expect("string serialization is infallible"));
}

fn write_value(out: &mut String, v: &Value, indent: usize, path: &mut String) -> Result<(), CanonicalError> {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                let f = n.as_f64().ok_or_else(|| CanonicalError::NonFinite { path: path.clone() })?;
                if !f.is_finite() {
                    return Err(CanonicalError::NonFinite { path: path.clone() });
                }
                out.push_str(&render_f64(f));
            }
        }
        Value::String(s) => write_string(out, s),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return Ok(());
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                push_indent(out, indent + 1);
                let len = path.len();
                path.push_str(&format!("[{i}]"));
                write_value(out, item, indent + 1, path)?;
                path.truncate(len);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            push_indent(out, indent);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return Ok(());
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, key) in keys.iter().enumerate() {
                push_indent(out, indent + 1);
                write_string(out, key);
                out.push_str(": ");
                let len = path.len();
                path.push('.');
                path.push_str(key);
                write_value(out, &map[*key], indent + 1, path)?;
                path.truncate(len);
                if i + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            push_indent(out, indent);
            out.push('}');
        }
    }
    Ok(())
}

fn push_indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

/// Serialize any serde value into canonical bytes (trailing newline included).
pub fn canonical_serialize<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    let v = serde_json::to_value(value).map_err(|e| CanonicalError::Encode(e.to_string()))?;
    let mut out = String::new();
    write_value(&mut out, &v, 0, &mut String::from("$"))?;
    out.push('\n');
    Ok(out.into_bytes())
}

/// Parse canonical bytes back into a typed value.
///
/// Errors carry the byte offset of the offending position.
pub fn canonical_parse<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, CanonicalError> {
    serde_json::from_slice(bytes).map_err(|e| {
        let offset = byte_offset(bytes, e.line(), e.column());
        CanonicalError::Parse { offset, message: e.to_string() }
    })
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut current = 1;
    let mut start = 0;
    for (i, b) in bytes.iter().enumerate() {
        if current == line {
            break;
        }
        if *b == b'\n' {
            current += 1;
            start = i + 1;
        }
    }
    (start + column.saturating_sub(1)).min(bytes.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    struct Doc {
        zeta: f64,
        alpha: Vec<i64>,
        name: String,
    }

    #[test]
    fn keys_are_sorted_and_floats_fixed() {
        let d = Doc { zeta: 1.0 / 3.0, alpha: vec![1, -2], name: "x".into() };
        let text = String::from_utf8(canonical_serialize(&d).unwrap()).unwrap();
        assert_eq!(
            text,
            "{\n  \"alpha\": [\n    1,\n    -2\n  ],\n  \"name\": \"x\",\n  \"zeta\": 0.333333333\n}\n"
        );
    }

    #[test]
    fn float_rendering_rules() {
        assert_eq!(render_f64(3.0), "3.0");
        assert_eq!(render_f64(-0.0), "0.0");
        assert_eq!(render_f64(1e-5), "1e-5");
        assert_eq!(render_f64(2.5e20), "2.5e20");
        assert_eq!(render_f64(123456789.123), "123456789.0");
        assert_eq!(render_f64(0.1 + 0.2), "0.3");
    }

    #[test]
    fn parse_error_reports_byte_offset() {
        let bad = b"{\n  \"a\": [1,\n  }";
        match canonical_parse::<Value>(bad) {
            Err(CanonicalError::Parse { offset, .. }) => assert!(offset >= 10 && offset <= bad.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
