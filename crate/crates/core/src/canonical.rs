//! Canonical JSON: sorted object keys, compact separators and normalized
//! numbers. Used for argument equality and for the scripted-return lookup key.

use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};

/// Largest integer magnitude that survives an f64 round-trip exactly.
const EXACT_F64_INT: f64 = 9_007_199_254_740_992.0;

/// Returns a copy of `value` with keys sorted at every depth and integral
/// floats rewritten as integers, so that `5` and `5.0` compare equal.
pub fn canonicalize(value: &Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let mut out = Map::with_capacity(map.len());
            for key in keys {
                out.insert(key.clone(), canonicalize(&map[key]));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.iter().map(canonicalize).collect()),
        Value::Number(n) => Value::Number(normalize_number(n)),
        other => other.clone(),
    }
}

fn normalize_number(n: &Number) -> Number {
    if n.is_i64() || n.is_u64() {
        return n.clone();
    }
    match n.as_f64() {
        Some(f) if f.fract() == 0.0 && f.abs() < EXACT_F64_INT => {
            // -0.0 normalizes to 0 as well
            Number::from(f as i64)
        }
        _ => n.clone(),
    }
}

/// Compact, sorted-key serialization.
pub fn canonical_string(value: &Value) -> String {
    serde_json::to_string(&canonicalize(value)).expect("JSON values always serialize")
}

/// Canonical equality of two JSON values.
pub fn canonical_eq(a: &Value, b: &Value) -> bool {
    canonicalize(a) == canonicalize(b)
}

/// Hex SHA-256 of the canonical serialization of an argument map.
pub fn args_hash(arguments: &Map<String, Value>) -> String {
    let text = canonical_string(&Value::Object(arguments.clone()));
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Stringification used wherever a JSON value is compared as text:
/// strings contribute their content, everything else its canonical form.
pub fn value_text(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => canonical_string(other),
    }
}
