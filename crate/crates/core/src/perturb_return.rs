//! Tool-return operators: FK, AP, CK, UK and CF.
//!
//! Key transforms apply at every nesting depth by default. With
//! `recursive = false` only outermost objects (those not nested inside
//! another object) are touched.

use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::corpus::ToolReturn;
use crate::operator::{Operator, PerturbationRecord};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReturnPerturbError {
    #[error("tool return is not JSON")]
    NotJson,
    #[error("tool return contains no JSON object")]
    NoObjects,
    #[error("tool return has no ID-type field")]
    NoIdFields,
    #[error("{0} is not a tool-return operator")]
    WrongSource(Operator),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PathSegment {
    Key(String),
    Index(usize),
}

/// Location of a value inside a JSON document.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeyPath(pub Vec<PathSegment>);

impl KeyPath {
    fn child_key(&self, key: &str) -> KeyPath {
        let mut p = self.0.clone();
        p.push(PathSegment::Key(key.to_string()));
        KeyPath(p)
    }

    fn child_index(&self, i: usize) -> KeyPath {
        let mut p = self.0.clone();
        p.push(PathSegment::Index(i));
        KeyPath(p)
    }

    /// Follows the path through `value`.
    pub fn resolve<'a>(&self, value: &'a Value) -> Option<&'a Value> {
        self.0.iter().try_fold(value, |v, seg| match seg {
            PathSegment::Key(k) => v.get(k),
            PathSegment::Index(i) => v.get(*i),
        })
    }
}

impl fmt::Display for KeyPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("$")?;
        for seg in &self.0 {
            match seg {
                PathSegment::Key(k) => write!(f, ".{k}")?,
                PathSegment::Index(i) => write!(f, "[{i}]")?,
            }
        }
        Ok(())
    }
}

/// Two or more keys of one object that mapped to the same new key; the
/// value of the last one survives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionWarning {
    pub path: KeyPath,
    pub keys: Vec<String>,
    pub result: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReturnDetails {
    pub modified_paths: Vec<KeyPath>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub collisions: Vec<CollisionWarning>,
}

#[derive(Debug, Clone)]
pub struct ReturnOptions {
    pub recursive: bool,
    /// Keys whose values AP treats as IDs.
    pub id_key: Regex,
    /// When set, AP also prefixes string values matching this pattern
    /// regardless of their key.
    pub id_value: Option<Regex>,
}

pub const DEFAULT_ID_KEY_PATTERN: &str = r"^(?i:id)$|_id$|Id$|ID$";

impl Default for ReturnOptions {
    fn default() -> Self {
        ReturnOptions {
            recursive: true,
            id_key: Regex::new(DEFAULT_ID_KEY_PATTERN).expect("valid pattern"),
            id_value: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnOutcome {
    pub ret: ToolReturn,
    pub details: ReturnDetails,
}

fn json_of(ret: &ToolReturn) -> Result<&Value, ReturnPerturbError> {
    ret.as_json().ok_or(ReturnPerturbError::NotJson)
}

/// Renames the keys of every object it visits with `rename(index, key)`.
fn transform_keys(
    value: &Value,
    opts: &ReturnOptions,
    rename: &dyn Fn(usize, &str) -> String,
) -> (Value, ReturnDetails, usize) {
    let mut details = ReturnDetails::default();
    let mut objects = 0;
    let out = walk_keys(value, &KeyPath::default(), false, opts, rename, &mut details, &mut objects);
    (out, details, objects)
}

fn walk_keys(
    value: &Value,
    path: &KeyPath,
    inside_object: bool,
    opts: &ReturnOptions,
    rename: &dyn Fn(usize, &str) -> String,
    details: &mut ReturnDetails,
    objects: &mut usize,
) -> Value {
    match value {
        Value::Object(map) => {
            let active = opts.recursive || !inside_object;
            if active {
                *objects += 1;
            }
            let mut out = Map::with_capacity(map.len());
            let mut sources: Vec<(String, Vec<String>)> = Vec::new();
            for (i, (key, child)) in map.iter().enumerate() {
                let new_key = if active { rename(i, key) } else { key.clone() };
                if new_key != *key {
                    details.modified_paths.push(path.child_key(key));
                }
                let child = walk_keys(child, &path.child_key(key), true, opts, rename, details, objects);
                match sources.iter_mut().find(|(k, _)| *k == new_key) {
                    Some((_, origins)) => origins.push(key.clone()),
                    None => sources.push((new_key.clone(), vec![key.clone()])),
                }
                out.insert(new_key, child);
            }
            for (result, keys) in sources.into_iter().filter(|(_, k)| k.len() > 1) {
                details.collisions.push(CollisionWarning {
                    path: path.clone(),
                    keys,
                    result,
                });
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(
            items
                .iter()
                .enumerate()
                .map(|(i, v)| walk_keys(v, &path.child_index(i), inside_object, opts, rename, details, objects))
                .collect(),
        ),
        other => other.clone(),
    }
}

/// Renames keys to `Object_1..Object_n`, numbered per object in document order.
pub fn fk(ret: &ToolReturn, opts: &ReturnOptions) -> Result<ReturnOutcome, ReturnPerturbError> {
    let value = json_of(ret)?;
    let (out, details, objects) = transform_keys(value, opts, &|i, _| format!("Object_{}", i + 1));
    if objects == 0 {
        return Err(ReturnPerturbError::NoObjects);
    }
    Ok(ReturnOutcome {
        ret: ToolReturn::Json(out),
        details,
    })
}

/// Converts every key to lowerCamelCase.
pub fn ck(ret: &ToolReturn, opts: &ReturnOptions) -> Result<ReturnOutcome, ReturnPerturbError> {
    let value = json_of(ret)?;
    let (out, details, _) = transform_keys(value, opts, &|_, k| camel_case(k));
    Ok(ReturnOutcome {
        ret: ToolReturn::Json(out),
        details,
    })
}

/// Converts every key to lowercase snake_case.
pub fn uk(ret: &ToolReturn, opts: &ReturnOptions) -> Result<ReturnOutcome, ReturnPerturbError> {
    let value = json_of(ret)?;
    let (out, details, _) = transform_keys(value, opts, &|_, k| snake_case(k));
    Ok(ReturnOutcome {
        ret: ToolReturn::Json(out),
        details,
    })
}

/// Prefixes `ID_` to the values of ID-type fields.
pub fn ap(ret: &ToolReturn, opts: &ReturnOptions) -> Result<ReturnOutcome, ReturnPerturbError> {
    let value = json_of(ret)?;
    let mut details = ReturnDetails::default();
    let out = walk_ids(value, &KeyPath::default(), false, false, opts, &mut details);
    if details.modified_paths.is_empty() {
        return Err(ReturnPerturbError::NoIdFields);
    }
    Ok(ReturnOutcome {
        ret: ToolReturn::Json(out),
        details,
    })
}

fn id_prefixed(value: &Value) -> Option<Value> {
    match value {
        Value::String(s) => Some(Value::String(format!("ID_{s}"))),
        Value::Number(n) => Some(Value::String(format!("ID_{n}"))),
        Value::Bool(b) => Some(Value::String(format!("ID_{b}"))),
        _ => None,
    }
}

fn walk_ids(
    value: &Value,
    path: &KeyPath,
    inside_object: bool,
    id_key: bool,
    opts: &ReturnOptions,
    details: &mut ReturnDetails,
) -> Value {
    let active = opts.recursive || !inside_object;
    match value {
        Value::Object(map) => {
            let mut out = Map::with_capacity(map.len());
            for (key, child) in map {
                let child_path = path.child_key(key);
                let is_id = active && opts.id_key.is_match(key);
                out.insert(key.clone(), walk_ids(child, &child_path, true, is_id, opts, details));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(
            items
                .iter()
                .enumerate()
                .map(|(i, v)| walk_ids(v, &path.child_index(i), inside_object, id_key, opts, details))
                .collect(),
        ),
        scalar => {
            let by_value = matches!((&opts.id_value, scalar), (Some(re), Value::String(s)) if re.is_match(s));
            if id_key || by_value {
                if let Some(prefixed) = id_prefixed(scalar) {
                    details.modified_paths.push(path.clone());
                    return prefixed;
                }
            }
            scalar.clone()
        }
    }
}

/// Compact serialization with its last code point replaced by `...`.
pub fn cf(ret: &ToolReturn) -> Result<ReturnOutcome, ReturnPerturbError> {
    let value = json_of(ret)?;
    let mut text = serde_json::to_string(value).expect("JSON values always serialize");
    text.pop();
    text.push_str("...");
    Ok(ReturnOutcome {
        ret: ToolReturn::Raw(text),
        details: ReturnDetails {
            modified_paths: vec![KeyPath::default()],
            collisions: Vec::new(),
        },
    })
}

/// Splits a key into words on `_`, `-`, lower→upper humps, acronym ends
/// (`HTTPServer` → `HTTP`, `Server`) and letter↔digit boundaries.
pub fn key_tokens(key: &str) -> Vec<String> {
    let chars: Vec<char> = key.chars().collect();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c == '_' || c == '-' {
            if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur));
            }
            continue;
        }
        if !cur.is_empty() {
            let prev = chars[i - 1];
            let next = chars.get(i + 1).copied();
            let boundary = (prev.is_lowercase() && c.is_uppercase())
                || (prev.is_uppercase() && c.is_uppercase() && next.is_some_and(char::is_lowercase))
                || (prev.is_alphabetic() && c.is_ascii_digit())
                || (prev.is_ascii_digit() && c.is_alphabetic());
            if boundary {
                tokens.push(std::mem::take(&mut cur));
            }
        }
        cur.push(c);
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

fn join_camel(tokens: &[String]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i == 0 {
            out.push_str(&t.to_lowercase());
        } else {
            let mut chars = t.chars();
            if let Some(first) = chars.next() {
                out.extend(first.to_uppercase());
                out.push_str(&chars.as_str().to_lowercase());
            }
        }
    }
    out
}

/// lowerCamelCase. Joining can merge single-letter words into what reads
/// as an acronym (`a_b_c` → `aBC`), so the join is repeated until stable;
/// this keeps the conversion idempotent.
pub fn camel_case(key: &str) -> String {
    let mut current = join_camel(&key_tokens(key));
    for _ in 0..64 {
        let next = join_camel(&key_tokens(&current));
        if next == current {
            break;
        }
        current = next;
    }
    current
}

/// snake_case, all lowercase.
pub fn snake_case(key: &str) -> String {
    key_tokens(key)
        .iter()
        .map(|t| t.to_lowercase())
        .collect::<Vec<_>>()
        .join("_")
}

/// Applies a return operator and returns the new observation with its details.
pub fn apply_outcome(
    ret: &ToolReturn,
    operator: Operator,
    opts: &ReturnOptions,
) -> Result<ReturnOutcome, ReturnPerturbError> {
    match operator {
        Operator::FK => fk(ret, opts),
        Operator::AP => ap(ret, opts),
        Operator::CK => ck(ret, opts),
        Operator::UK => uk(ret, opts),
        Operator::CF => cf(ret),
        other => Err(ReturnPerturbError::WrongSource(other)),
    }
}

/// Applies a return operator and builds its log record.
pub fn apply(
    ret: &ToolReturn,
    operator: Operator,
    seed: u64,
    target: &str,
    opts: &ReturnOptions,
) -> Result<(ToolReturn, PerturbationRecord), ReturnPerturbError> {
    let outcome = apply_outcome(ret, operator, opts)?;
    let record = PerturbationRecord {
        operator,
        seed,
        target: target.to_string(),
        skipped: None,
        details: serde_json::to_value(&outcome.details).expect("details serialize"),
    };
    Ok((outcome.ret, record))
}
