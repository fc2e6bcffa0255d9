//! Campaign corpus: test cases, tool documents, annotated queries and oracles.
//!
//! A corpus file is a single JSON document `{"schema_version": 1, "cases": [...]}`.
//! Parsing happens in two phases. The raw bytes are first parsed as JSON
//! (syntax errors carry a byte offset), then each case is decoded and checked
//! against the type invariants (errors name the case and field).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::canonical::{args_hash, canonical_eq, value_text};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("malformed corpus JSON at byte {offset}: {message}")]
    MalformedInput { offset: usize, message: String },
    #[error("schema violation in case `{case_id}` at `{field}`: {message}")]
    SchemaViolation {
        case_id: String,
        field: String,
        message: String,
    },
    #[error("span mismatch in case `{case_id}`, mention {index}: {message}")]
    SpanMismatch {
        case_id: String,
        index: usize,
        message: String,
    },
}

impl CorpusError {
    fn schema(case_id: &str, field: impl Into<String>, message: impl Into<String>) -> Self {
        CorpusError::SchemaViolation {
            case_id: case_id.to_string(),
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    String,
    Integer,
    Number,
    Boolean,
    Array,
    Object,
}

impl ParamType {
    pub const ALL: [ParamType; 6] = [
        ParamType::String,
        ParamType::Integer,
        ParamType::Number,
        ParamType::Boolean,
        ParamType::Array,
        ParamType::Object,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamType::String => "string",
            ParamType::Integer => "integer",
            ParamType::Number => "number",
            ParamType::Boolean => "boolean",
            ParamType::Array => "array",
            ParamType::Object => "object",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, ParamType::Integer | ParamType::Number)
    }

    /// Whether a JSON value inhabits this type. Integral floats count as
    /// integers, matching canonical numeric equality.
    pub fn admits(self, value: &Value) -> bool {
        match (self, value) {
            (ParamType::String, Value::String(_)) => true,
            (ParamType::Integer, Value::Number(n)) => {
                n.is_i64() || n.is_u64() || n.as_f64().is_some_and(|f| f.fract() == 0.0)
            }
            (ParamType::Number, Value::Number(_)) => true,
            (ParamType::Boolean, Value::Bool(_)) => true,
            (ParamType::Array, Value::Array(_)) => true,
            (ParamType::Object, Value::Object(_)) => true,
            _ => false,
        }
    }
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSpec {
    pub name: String,
    pub ptype: ParamType,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enum_values: Option<Vec<Value>>,
    /// Regex the whole string value must match.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    /// Inclusive `[min, max]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example: Option<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecRule {
    Type,
    Enum,
    Format,
    Range,
}

/// One way a value fails its parameter specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecViolation {
    pub rule: SpecRule,
    pub detail: String,
}

impl ParameterSpec {
    pub fn new(name: impl Into<String>, ptype: ParamType) -> Self {
        ParameterSpec {
            name: name.into(),
            ptype,
            description: String::new(),
            required: false,
            enum_values: None,
            format: None,
            range: None,
            example: None,
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn required(mut self) -> Self {
        self.required = true;
        self
    }

    /// Every rule of this specification that `value` breaks. Empty when the
    /// value conforms.
    pub fn violations(&self, value: &Value) -> Vec<SpecViolation> {
        let mut out = Vec::new();
        if !self.ptype.admits(value) {
            out.push(SpecViolation {
                rule: SpecRule::Type,
                detail: format!("expected {}, got {}", self.ptype, json_kind(value)),
            });
        }
        if let Some(allowed) = &self.enum_values {
            if !allowed.iter().any(|a| canonical_eq(a, value)) {
                out.push(SpecViolation {
                    rule: SpecRule::Enum,
                    detail: format!("{} is not one of the admissible values", value_text(value)),
                });
            }
        }
        if let (Some(pattern), Value::String(s)) = (&self.format, value) {
            match anchored(pattern) {
                Ok(re) if re.is_match(s) => {}
                Ok(_) => out.push(SpecViolation {
                    rule: SpecRule::Format,
                    detail: format!("{s:?} does not match /{pattern}/"),
                }),
                Err(e) => out.push(SpecViolation {
                    rule: SpecRule::Format,
                    detail: format!("format /{pattern}/ is not a valid pattern: {e}"),
                }),
            }
        }
        if let (Some([min, max]), Some(x)) = (self.range, value.as_f64()) {
            if x < min || x > max {
                out.push(SpecViolation {
                    rule: SpecRule::Range,
                    detail: format!("{x} outside [{min}, {max}]"),
                });
            }
        }
        out
    }

    fn check(&self) -> Result<(), String> {
        if self.name.is_empty() {
            return Err("parameter name is empty".into());
        }
        if let (Some(allowed), Some(example)) = (&self.enum_values, &self.example) {
            if !allowed.iter().any(|a| canonical_eq(a, example)) {
                return Err(format!("example of `{}` is not an enum member", self.name));
            }
        }
        if let Some([min, max]) = self.range {
            if !self.ptype.is_numeric() {
                return Err(format!("range on non-numeric parameter `{}`", self.name));
            }
            if min > max {
                return Err(format!("range of `{}` has min > max", self.name));
            }
        }
        if let Some(pattern) = &self.format {
            anchored(pattern).map_err(|e| format!("format of `{}`: {e}", self.name))?;
        }
        Ok(())
    }
}

fn anchored(pattern: &str) -> Result<Regex, regex::Error> {
    Regex::new(&format!("^(?:{pattern})$"))
}

fn json_kind(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_i64() || n.is_u64() => "integer",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolDocument {
    pub tool_name: String,
    #[serde(default)]
    pub description: String,
    /// Order is significant.
    #[serde(default)]
    pub parameters: Vec<ParameterSpec>,
    #[serde(default)]
    pub usage_examples: Vec<String>,
}

impl ToolDocument {
    pub fn param(&self, name: &str) -> Option<&ParameterSpec> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn has_param(&self, name: &str) -> bool {
        self.param(name).is_some()
    }

    /// Checks the document-level invariants.
    pub fn validate(&self) -> Result<(), String> {
        if self.tool_name.is_empty() {
            return Err("tool_name is empty".into());
        }
        let mut seen = HashSet::new();
        for p in &self.parameters {
            p.check()?;
            if !seen.insert(p.name.as_str()) {
                return Err(format!("duplicate parameter `{}`", p.name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mention {
    /// Half-open `[start, end)` in code points.
    pub span: [usize; 2],
    pub param_name: String,
    pub tool_name: String,
    pub value_text: String,
}

impl Mention {
    pub fn start(&self) -> usize {
        self.span[0]
    }

    pub fn end(&self) -> usize {
        self.span[1]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedQuery {
    pub text: String,
    #[serde(default)]
    pub mentions: Vec<Mention>,
}

impl AnnotatedQuery {
    pub fn plain(text: impl Into<String>) -> Self {
        AnnotatedQuery {
            text: text.into(),
            mentions: Vec::new(),
        }
    }

    /// Checks that spans are ordered, disjoint, in bounds, and cover exactly
    /// their `value_text`. Returns the offending mention index on failure.
    pub fn check_spans(&self) -> Result<(), (usize, String)> {
        let len = self.text.chars().count();
        let mut prev_end = 0;
        for (i, m) in self.mentions.iter().enumerate() {
            let [start, end] = m.span;
            if start >= end {
                return Err((i, format!("empty or inverted span [{start}, {end})")));
            }
            if end > len {
                return Err((i, format!("span [{start}, {end}) exceeds text length {len}")));
            }
            if start < prev_end {
                return Err((i, format!("span [{start}, {end}) overlaps or precedes previous mention")));
            }
            let covered = char_slice(&self.text, start, end);
            if covered != m.value_text {
                return Err((
                    i,
                    format!("text[{start}..{end}] is {covered:?}, expected {:?}", m.value_text),
                ));
            }
            prev_end = end;
        }
        Ok(())
    }
}

/// Substring by code-point offsets. Offsets past the end are clamped.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let byte_at = |idx: usize| text.char_indices().nth(idx).map_or(text.len(), |(b, _)| b);
    let (s, e) = (byte_at(start), byte_at(end));
    if s >= e {
        ""
    } else {
        &text[s..e]
    }
}

/// A tool observation: parsed JSON, or raw text when the payload is not JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "lowercase")]
pub enum ToolReturn {
    Json(Value),
    Raw(String),
}

impl ToolReturn {
    /// Text shown to the agent.
    pub fn render(&self) -> String {
        match self {
            ToolReturn::Json(v) => serde_json::to_string(v).expect("JSON values always serialize"),
            ToolReturn::Raw(s) => s.clone(),
        }
    }

    pub fn as_json(&self) -> Option<&Value> {
        match self {
            ToolReturn::Json(v) => Some(v),
            ToolReturn::Raw(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleInvocation {
    pub tool_name: String,
    pub arguments: Map<String, Value>,
    /// Parameters the task genuinely requires. Defaults to every oracle
    /// argument when omitted.
    #[serde(default)]
    pub needed_params: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedReturn {
    pub tool_name: String,
    pub arguments: Map<String, Value>,
    #[serde(rename = "return")]
    pub tool_return: ToolReturn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestCase {
    pub case_id: String,
    pub query: AnnotatedQuery,
    pub tools: Vec<ToolDocument>,
    pub oracle: Vec<OracleInvocation>,
    #[serde(default)]
    pub scripted_returns: Vec<ScriptedReturn>,
    pub solvable: bool,
}

impl TestCase {
    pub fn tool(&self, name: &str) -> Option<&ToolDocument> {
        self.tools.iter().find(|t| t.tool_name == name)
    }

    /// Index from `(tool_name, canonical args hash)` to the scripted return.
    pub fn return_index(&self) -> BTreeMap<(String, String), &ToolReturn> {
        self.scripted_returns
            .iter()
            .map(|r| ((r.tool_name.clone(), args_hash(&r.arguments)), &r.tool_return))
            .collect()
    }

    /// Scripted return for a call, matched order-insensitively on arguments.
    pub fn lookup_return(&self, tool_name: &str, arguments: &Map<String, Value>) -> Option<&ToolReturn> {
        let hash = args_hash(arguments);
        self.scripted_returns
            .iter()
            .find(|r| r.tool_name == tool_name && args_hash(&r.arguments) == hash)
            .map(|r| &r.tool_return)
    }

    /// Checks every type invariant of the case.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let id = self.case_id.as_str();
        if id.is_empty() {
            return Err(CorpusError::schema("<unnamed>", "case_id", "case_id is empty"));
        }
        let mut names = HashSet::new();
        for (ti, tool) in self.tools.iter().enumerate() {
            tool.validate()
                .map_err(|m| CorpusError::schema(id, format!("tools[{ti}]"), m))?;
            if !names.insert(tool.tool_name.as_str()) {
                return Err(CorpusError::schema(
                    id,
                    format!("tools[{ti}].tool_name"),
                    format!("duplicate tool `{}`", tool.tool_name),
                ));
            }
        }
        self.query.check_spans().map_err(|(index, message)| CorpusError::SpanMismatch {
            case_id: id.to_string(),
            index,
            message,
        })?;
        for (mi, m) in self.query.mentions.iter().enumerate() {
            let field = format!("query.mentions[{mi}]");
            let tool = self.tool(&m.tool_name).ok_or_else(|| {
                CorpusError::schema(id, &field, format!("unknown tool `{}`", m.tool_name))
            })?;
            if !tool.has_param(&m.param_name) {
                return Err(CorpusError::schema(
                    id,
                    field,
                    format!("tool `{}` has no parameter `{}`", m.tool_name, m.param_name),
                ));
            }
        }
        for (oi, inv) in self.oracle.iter().enumerate() {
            let field = format!("oracle[{oi}]");
            let tool = self.tool(&inv.tool_name).ok_or_else(|| {
                CorpusError::schema(id, &field, format!("unknown tool `{}`", inv.tool_name))
            })?;
            for name in inv.arguments.keys() {
                if !tool.has_param(name) {
                    return Err(CorpusError::schema(
                        id,
                        format!("{field}.arguments.{name}"),
                        format!("tool `{}` has no parameter `{name}`", inv.tool_name),
                    ));
                }
            }
            for name in &inv.needed_params {
                if !tool.has_param(name) {
                    return Err(CorpusError::schema(
                        id,
                        format!("{field}.needed_params"),
                        format!("tool `{}` has no parameter `{name}`", inv.tool_name),
                    ));
                }
            }
        }
        let mut keys = HashSet::new();
        for (ri, r) in self.scripted_returns.iter().enumerate() {
            if self.tool(&r.tool_name).is_none() {
                return Err(CorpusError::schema(
                    id,
                    format!("scripted_returns[{ri}]"),
                    format!("unknown tool `{}`", r.tool_name),
                ));
            }
            if !keys.insert((r.tool_name.as_str(), args_hash(&r.arguments))) {
                return Err(CorpusError::schema(
                    id,
                    format!("scripted_returns[{ri}]"),
                    "duplicate (tool_name, arguments) entry",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CorpusFile {
    schema_version: u32,
    cases: Vec<TestCase>,
}

/// Parses and validates a corpus document.
pub fn parse_corpus(raw: &[u8]) -> Result<Vec<TestCase>, CorpusError> {
    let doc: Value = serde_json::from_slice(raw).map_err(|e| CorpusError::MalformedInput {
        offset: byte_offset(raw, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let Value::Object(mut top) = doc else {
        return Err(CorpusError::schema("<corpus>", "$", "top level must be an object"));
    };
    match top.get("schema_version").and_then(Value::as_u64) {
        Some(v) if v == u64::from(SCHEMA_VERSION) => {}
        Some(v) => {
            return Err(CorpusError::schema(
                "<corpus>",
                "schema_version",
                format!("unsupported schema_version {v}"),
            ))
        }
        None => {
            return Err(CorpusError::schema(
                "<corpus>",
                "schema_version",
                "missing or non-integer schema_version",
            ))
        }
    }
    let Some(Value::Array(raw_cases)) = top.remove("cases") else {
        return Err(CorpusError::schema("<corpus>", "cases", "`cases` must be an array"));
    };
    let mut cases = Vec::with_capacity(raw_cases.len());
    let mut ids = HashSet::new();
    for (i, raw_case) in raw_cases.into_iter().enumerate() {
        let label = raw_case
            .get("case_id")
            .and_then(Value::as_str)
            .map_or_else(|| format!("#{i}"), str::to_string);
        let case: TestCase = serde_json::from_value(raw_case)
            .map_err(|e| CorpusError::schema(&label, format!("cases[{i}]"), e.to_string()))?;
        let case = with_default_needed(case);
        case.validate()?;
        if !ids.insert(case.case_id.clone()) {
            return Err(CorpusError::schema(&label, "case_id", "duplicate case_id"));
        }
        cases.push(case);
    }
    Ok(cases)
}

fn with_default_needed(mut case: TestCase) -> TestCase {
    for inv in &mut case.oracle {
        if inv.needed_params.is_empty() {
            inv.needed_params = inv.arguments.keys().cloned().collect();
        }
    }
    case
}

/// Serializes cases as a corpus document that [`parse_corpus`] reads back.
pub fn serialize_corpus(cases: &[TestCase]) -> String {
    let file = CorpusFile {
        schema_version: SCHEMA_VERSION,
        cases: cases.to_vec(),
    };
    serde_json::to_string_pretty(&file).expect("corpus values always serialize")
}

fn byte_offset(raw: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in raw.split(|b| *b == b'\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(raw.len());
        }
        offset += l.len() + 1;
    }
    raw.len()
}

/// Drops unsolvable cases and cases in which no tool takes any parameter.
pub fn filter_cases(cases: Vec<TestCase>) -> Vec<TestCase> {
    cases
        .into_iter()
        .filter(|c| c.solvable && c.tools.iter().any(|t| !t.parameters.is_empty()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "finding", rename_all = "snake_case")]
pub enum LintFinding {
    /// An oracle value appears verbatim in the query but no mention covers it.
    UncoveredMention {
        oracle_index: usize,
        tool_name: String,
        param_name: String,
        value: String,
    },
    DuplicateParamName {
        tool_name: String,
        param_name: String,
    },
    /// The oracle itself would be labeled a specification mismatch.
    OracleViolatesSpec {
        oracle_index: usize,
        tool_name: String,
        param_name: String,
        detail: String,
    },
    /// The oracle leaves out a parameter the schema marks required.
    OracleMissingRequired {
        oracle_index: usize,
        tool_name: String,
        param_name: String,
    },
    /// A needed parameter is absent from the oracle's own arguments.
    NeededParamAbsent {
        oracle_index: usize,
        tool_name: String,
        param_name: String,
    },
}

impl fmt::Display for LintFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LintFinding::UncoveredMention {
                oracle_index,
                tool_name,
                param_name,
                value,
            } => write!(
                f,
                "oracle[{oracle_index}] {tool_name}.{param_name}: value {value:?} appears in the query without a mention"
            ),
            LintFinding::DuplicateParamName { tool_name, param_name } => {
                write!(f, "{tool_name}: duplicate parameter `{param_name}`")
            }
            LintFinding::OracleViolatesSpec {
                oracle_index,
                tool_name,
                param_name,
                detail,
            } => write!(f, "oracle[{oracle_index}] {tool_name}.{param_name}: {detail}"),
            LintFinding::OracleMissingRequired {
                oracle_index,
                tool_name,
                param_name,
            } => write!(
                f,
                "oracle[{oracle_index}] {tool_name}: required parameter `{param_name}` not set"
            ),
            LintFinding::NeededParamAbsent {
                oracle_index,
                tool_name,
                param_name,
            } => write!(
                f,
                "oracle[{oracle_index}] {tool_name}: needed parameter `{param_name}` has no value"
            ),
        }
    }
}

/// Data-quality findings for a parsed case. An empty list means clean.
pub fn lint_case(case: &TestCase) -> Vec<LintFinding> {
    let mut findings = Vec::new();
    for tool in &case.tools {
        let mut seen = HashSet::new();
        for p in &tool.parameters {
            if !seen.insert(p.name.as_str()) {
                findings.push(LintFinding::DuplicateParamName {
                    tool_name: tool.tool_name.clone(),
                    param_name: p.name.clone(),
                });
            }
        }
    }
    for (oi, inv) in case.oracle.iter().enumerate() {
        let Some(tool) = case.tool(&inv.tool_name) else {
            continue;
        };
        for (name, value) in &inv.arguments {
            let text = match value {
                Value::String(s) if !s.is_empty() => s.clone(),
                Value::Number(n) => n.to_string(),
                _ => String::new(),
            };
            let covered = case
                .query
                .mentions
                .iter()
                .any(|m| m.tool_name == inv.tool_name && m.param_name == *name);
            if !text.is_empty() && !covered && case.query.text.contains(&text) {
                findings.push(LintFinding::UncoveredMention {
                    oracle_index: oi,
                    tool_name: inv.tool_name.clone(),
                    param_name: name.clone(),
                    value: text,
                });
            }
            if let Some(spec) = tool.param(name) {
                for v in spec.violations(value) {
                    findings.push(LintFinding::OracleViolatesSpec {
                        oracle_index: oi,
                        tool_name: inv.tool_name.clone(),
                        param_name: name.clone(),
                        detail: v.detail,
                    });
                }
            }
        }
        for p in tool.parameters.iter().filter(|p| p.required) {
            if !inv.arguments.contains_key(&p.name) {
                findings.push(LintFinding::OracleMissingRequired {
                    oracle_index: oi,
                    tool_name: inv.tool_name.clone(),
                    param_name: p.name.clone(),
                });
            }
        }
        for name in &inv.needed_params {
            if !inv.arguments.contains_key(name) {
                findings.push(LintFinding::NeededParamAbsent {
                    oracle_index: oi,
                    tool_name: inv.tool_name.clone(),
                    param_name: name.clone(),
                });
            }
        }
    }
    findings
}
