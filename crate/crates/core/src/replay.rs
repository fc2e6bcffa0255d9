//! Deterministic scripted driver.
//!
//! A script file lists behaviors per case, optionally per operator. A
//! behavior for `(case, operator)` wins over the case default; cases with
//! no script at all replay their oracle invocations and then answer.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::ObservedInvocation;
use crate::corpus::{OracleInvocation, TestCase};
use crate::driver::{parse_arguments_best_effort, AgentContext, AgentDriver, AgentStep, DriverError};
use crate::operator::Operator;

pub const SCRIPT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScriptError {
    #[error("malformed script file: {0}")]
    Malformed(String),
    #[error("unsupported script schema_version {0}")]
    Version(u32),
    #[error("script for `{case_id}` is empty")]
    Empty { case_id: String },
    #[error("script for `{case_id}` does not end with a final answer")]
    NoFinal { case_id: String },
    #[error("more than one script for `{case_id}` / {operator}")]
    Duplicate { case_id: String, operator: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptStep {
    Invoke {
        tool_name: String,
        arguments: Map<String, Value>,
        #[serde(default)]
        thought: String,
    },
    /// A call whose argument text is not clean JSON.
    Malformed {
        tool_name: String,
        raw_text: String,
        #[serde(default)]
        thought: String,
    },
    Final {
        answer: String,
        #[serde(default)]
        thought: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedBehavior {
    pub case_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<Operator>,
    pub steps: Vec<ScriptStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptFile {
    pub schema_version: u32,
    pub scripts: Vec<ScriptedBehavior>,
}

pub fn parse_scripts(raw: &[u8]) -> Result<Vec<ScriptedBehavior>, ScriptError> {
    let file: ScriptFile = serde_json::from_slice(raw).map_err(|e| ScriptError::Malformed(e.to_string()))?;
    if file.schema_version != SCRIPT_SCHEMA_VERSION {
        return Err(ScriptError::Version(file.schema_version));
    }
    Ok(file.scripts)
}

pub struct ReplayDriver {
    scripts: HashMap<(String, Option<Operator>), Vec<ScriptStep>>,
    oracles: HashMap<String, Vec<OracleInvocation>>,
    id: String,
}

impl ReplayDriver {
    /// Builds a driver from scripts, with oracle replay as the fallback for
    /// the given cases.
    pub fn new(scripts: Vec<ScriptedBehavior>, cases: &[TestCase]) -> Result<Self, ScriptError> {
        let mut hasher = Sha256::new();
        let mut table = HashMap::new();
        for s in scripts {
            match s.steps.last() {
                None => return Err(ScriptError::Empty { case_id: s.case_id }),
                Some(ScriptStep::Final { .. }) => {}
                Some(_) => return Err(ScriptError::NoFinal { case_id: s.case_id }),
            }
            hasher.update(serde_json::to_vec(&s).expect("scripts serialize"));
            let key = (s.case_id.clone(), s.operator);
            if table.insert(key, s.steps).is_some() {
                return Err(ScriptError::Duplicate {
                    case_id: s.case_id,
                    operator: s.operator.map_or("default".to_string(), |o| o.to_string()),
                });
            }
        }
        let digest = hex::encode(hasher.finalize());
        let oracles = cases.iter().map(|c| (c.case_id.clone(), c.oracle.clone())).collect();
        Ok(ReplayDriver {
            scripts: table,
            oracles,
            id: format!("replay:{}", &digest[..12]),
        })
    }

    fn script_step(&self, ctx: &AgentContext) -> Option<&ScriptStep> {
        let steps = self
            .scripts
            .get(&(ctx.case_id.clone(), ctx.operator))
            .or_else(|| self.scripts.get(&(ctx.case_id.clone(), None)))?;
        // a script that ran out keeps answering
        steps.get(ctx.steps.len()).or(steps.last())
    }
}

impl AgentDriver for ReplayDriver {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn next_step(&self, ctx: &AgentContext) -> Result<AgentStep, DriverError> {
        if let Some(step) = self.script_step(ctx) {
            return Ok(match step {
                ScriptStep::Invoke {
                    tool_name,
                    arguments,
                    thought,
                } => AgentStep::Invoke {
                    thought: thought.clone(),
                    invocation: ObservedInvocation::new(tool_name.clone(), arguments.clone()),
                },
                ScriptStep::Malformed {
                    tool_name,
                    raw_text,
                    thought,
                } => {
                    let (arguments, parse_error) = parse_arguments_best_effort(raw_text);
                    AgentStep::Invoke {
                        thought: thought.clone(),
                        invocation: ObservedInvocation {
                            tool_name: tool_name.clone(),
                            arguments,
                            raw_text: raw_text.clone(),
                            parse_error,
                        },
                    }
                }
                ScriptStep::Final { answer, thought } => AgentStep::Final {
                    thought: thought.clone(),
                    answer: answer.clone(),
                },
            });
        }
        let oracle = self
            .oracles
            .get(&ctx.case_id)
            .ok_or_else(|| DriverError::Script(format!("no script or oracle for case `{}`", ctx.case_id)))?;
        Ok(match oracle.get(ctx.steps.len()) {
            Some(inv) => AgentStep::Invoke {
                thought: format!("Calling {}.", inv.tool_name),
                invocation: ObservedInvocation::new(inv.tool_name.clone(), inv.arguments.clone()),
            },
            None => AgentStep::Final {
                thought: String::new(),
                answer: "Done.".into(),
            },
        })
    }
}
