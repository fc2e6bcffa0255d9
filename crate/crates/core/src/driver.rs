//! The agent-driver contract: what a driver sees at each step, what it may
//! answer, and the helpers every driver shares.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

use crate::classifier::ObservedInvocation;
use crate::corpus::ToolDocument;
use crate::operator::Operator;

/// Version stamp of the agent prompt below. Failure rates are only
/// comparable between runs that share it.
pub const TEMPLATE_VERSION: &str = "react-v1";
pub const REACT_TEMPLATE: &str = include_str!("../templates/react-v1.txt");

pub const DEFAULT_MAX_OBSERVATION_LENGTH: usize = 1024;
pub const DEFAULT_STEP_LIMIT: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DriverError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint rejected credentials (HTTP {0})")]
    AuthFailure(u16),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("unexpected response: {0}")]
    Protocol(String),
    #[error("script error: {0}")]
    Script(String),
}

/// One completed thought → invocation → observation round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub thought: String,
    pub invocation: ObservedInvocation,
    /// Observation text exactly as the driver saw it (after truncation).
    pub observation: String,
}

/// Everything a driver may look at when choosing its next step.
#[derive(Debug, Clone)]
pub struct AgentContext {
    pub case_id: String,
    pub operator: Option<Operator>,
    pub query: String,
    /// Possibly perturbed documents, as rendered to the agent.
    pub tools: Vec<ToolDocument>,
    pub declarations: Value,
    pub steps: Vec<StepRecord>,
    pub max_observation_length: usize,
}

impl AgentContext {
    pub fn new(case_id: impl Into<String>, operator: Option<Operator>, query: impl Into<String>, tools: Vec<ToolDocument>) -> Self {
        let declarations = render_function_declarations(&tools);
        AgentContext {
            case_id: case_id.into(),
            operator,
            query: query.into(),
            tools,
            declarations,
            steps: Vec::new(),
            max_observation_length: DEFAULT_MAX_OBSERVATION_LENGTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentStep {
    Invoke { thought: String, invocation: ObservedInvocation },
    Final { thought: String, answer: String },
}

/// A source of agent behavior. Implementations are shared across campaign
/// workers, so they must be callable concurrently.
pub trait AgentDriver: Send + Sync {
    /// Stable identifier stamped on every trajectory.
    fn id(&self) -> String;

    fn next_step(&self, ctx: &AgentContext) -> Result<AgentStep, DriverError>;
}

/// Cuts `text` to at most `budget` code points without splitting a
/// grapheme cluster. Returns the kept prefix and whether anything was cut.
pub fn truncate_observation(text: &str, budget: usize) -> (&str, bool) {
    if text.chars().count() <= budget {
        return (text, false);
    }
    let mut kept_chars = 0;
    let mut end = 0;
    for (offset, grapheme) in text.grapheme_indices(true) {
        let n = grapheme.chars().count();
        if kept_chars + n > budget {
            break;
        }
        kept_chars += n;
        end = offset + grapheme.len();
    }
    (&text[..end], true)
}

/// Renders tool documents as chat-completions function declarations.
///
/// Fields are copied verbatim, including any a perturbation corrupted.
/// Usage examples have no slot in the declaration format and are appended
/// to the function description.
pub fn render_function_declarations(tools: &[ToolDocument]) -> Value {
    let rendered: Vec<Value> = tools
        .iter()
        .map(|tool| {
            let mut properties = Map::new();
            for p in &tool.parameters {
                let mut prop = Map::new();
                prop.insert("type".into(), json!(p.ptype.as_str()));
                prop.insert("description".into(), json!(p.description));
                if let Some(values) = &p.enum_values {
                    prop.insert("enum".into(), Value::Array(values.clone()));
                }
                if let Some(pattern) = &p.format {
                    prop.insert("pattern".into(), json!(pattern));
                }
                if let Some([min, max]) = p.range {
                    prop.insert("minimum".into(), json!(min));
                    prop.insert("maximum".into(), json!(max));
                }
                if let Some(example) = &p.example {
                    prop.insert("examples".into(), json!([example]));
                }
                properties.insert(p.name.clone(), Value::Object(prop));
            }
            let required: Vec<&str> = tool
                .parameters
                .iter()
                .filter(|p| p.required)
                .map(|p| p.name.as_str())
                .collect();
            let mut description = tool.description.clone();
            if !tool.usage_examples.is_empty() {
                if !description.is_empty() {
                    description.push_str("\n\n");
                }
                description.push_str("Usage examples:");
                for ex in &tool.usage_examples {
                    description.push_str("\n- ");
                    description.push_str(ex);
                }
            }
            json!({
                "type": "function",
                "function": {
                    "name": tool.tool_name,
                    "description": description,
                    "parameters": {
                        "type": "object",
                        "properties": properties,
                        "required": required,
                    },
                },
            })
        })
        .collect();
    Value::Array(rendered)
}

/// Parses model-written call arguments, repairing what it can.
///
/// Returns the recovered arguments and, when the text was not a clean JSON
/// object, a description of the problem.
pub fn parse_arguments_best_effort(raw: &str) -> (Map<String, Value>, Option<String>) {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return (Map::new(), None);
    }
    let first_error = match serde_json::from_str::<Value>(trimmed) {
        Ok(Value::Object(map)) => return (map, None),
        Ok(other) => format!("arguments are not an object: {other}"),
        Err(e) => e.to_string(),
    };
    for candidate in repair_candidates(trimmed) {
        if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&candidate) {
            return (map, Some(format!("repaired malformed arguments: {first_error}")));
        }
    }
    (Map::new(), Some(format!("unparseable arguments: {first_error}")))
}

fn repair_candidates(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let unfenced = text
        .trim_start_matches("```json")
        .trim_start_matches("```")
        .trim_end_matches("```")
        .trim();
    out.push(unfenced.to_string());
    if let (Some(start), Some(end)) = (unfenced.find('{'), unfenced.rfind('}')) {
        if start < end {
            out.push(unfenced[start..=end].to_string());
        }
    }
    if let Some(start) = unfenced.find('{') {
        let body = &unfenced[start..];
        let open = body.matches('{').count().saturating_sub(body.matches('}').count());
        if open > 0 {
            let mut closed = body.trim_end_matches([',', ' ']).to_string();
            if closed.matches('"').count() % 2 == 1 {
                closed.push('"');
            }
            closed.push_str(&"}".repeat(open));
            out.push(closed);
        }
    }
    out
}
