//! Runs one test case under one operator through a driver.
//!
//! Document and query operators are applied once, before the first step.
//! Return operators are applied to every observation. A case the operator
//! cannot perturb at all is recorded as skipped without calling the driver.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classifier::ObservedInvocation;
use crate::canonical::canonical_string;
use crate::corpus::{TestCase, ToolDocument, ToolReturn};
use crate::driver::{
    truncate_observation, AgentContext, AgentDriver, AgentStep, DriverError, StepRecord, DEFAULT_MAX_OBSERVATION_LENGTH,
    DEFAULT_STEP_LIMIT, TEMPLATE_VERSION,
};
use crate::operator::{Operator, PerturbationRecord, Source};
use crate::perturb_doc::{self, DocPerturbSpec};
use crate::perturb_query::{self, Rewriter};
use crate::perturb_return::{self, ReturnOptions};

#[derive(Clone)]
pub struct RunOptions {
    pub step_limit: usize,
    pub max_observation_length: usize,
    pub return_options: ReturnOptions,
    /// Replaces the built-in rewriter for CP.
    pub complicator: Option<Arc<dyn Rewriter>>,
    /// Replaces the built-in rewriter for AN.
    pub noise: Option<Arc<dyn Rewriter>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            step_limit: DEFAULT_STEP_LIMIT,
            max_observation_length: DEFAULT_MAX_OBSERVATION_LENGTH,
            return_options: ReturnOptions::default(),
            complicator: None,
            noise: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    StepLimitExceeded,
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationEvent {
    pub step: usize,
    pub original_length: usize,
    pub truncated_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub case_id: String,
    pub operator: Option<Operator>,
    pub seed: u64,
    pub driver_id: String,
    pub template_version: String,
    /// Query text as the agent saw it.
    pub query: String,
    pub perturbations: Vec<PerturbationRecord>,
    pub steps: Vec<StepRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    pub truncations: Vec<TruncationEvent>,
    pub outcome: Outcome,
}

impl Trajectory {
    pub fn invocations(&self) -> Vec<ObservedInvocation> {
        self.steps.iter().map(|s| s.invocation.clone()).collect()
    }

    pub fn is_skipped(&self) -> bool {
        matches!(self.outcome, Outcome::Skipped { .. })
    }
}

/// What the agent is shown before its first step.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedInputs {
    pub query: String,
    pub tools: Vec<ToolDocument>,
    pub records: Vec<PerturbationRecord>,
}

pub fn skip_record(operator: Operator, seed: u64, target: &str, reason: String) -> PerturbationRecord {
    PerturbationRecord {
        operator,
        seed,
        target: target.to_string(),
        skipped: Some(reason),
        details: serde_json::Value::Null,
    }
}

/// Applies a document or query operator up front. Return operators are
/// only checked for applicability here. `Err` carries the skip reason when
/// nothing could be perturbed.
pub fn prepare_inputs(
    case: &TestCase,
    operator: Option<Operator>,
    seed: u64,
    donor_pool: &[ToolDocument],
    opts: &RunOptions,
) -> Result<PreparedInputs, (String, Vec<PerturbationRecord>)> {
    let mut prepared = PreparedInputs {
        query: case.query.text.clone(),
        tools: case.tools.clone(),
        records: Vec::new(),
    };
    let Some(op) = operator else { return Ok(prepared) };
    match op.source() {
        Source::ToolDocument => {
            let spec = DocPerturbSpec {
                donor_pool,
                ..DocPerturbSpec::new(op, seed)
            };
            let mut applied = false;
            for tool in prepared.tools.iter_mut() {
                match perturb_doc::apply(tool, &spec) {
                    Ok((doc, record)) => {
                        *tool = doc;
                        prepared.records.push(record);
                        applied = true;
                    }
                    Err(e) => prepared
                        .records
                        .push(skip_record(op, seed, &tool.tool_name, e.to_string())),
                }
            }
            if !applied {
                return Err((format!("{op} applies to none of the case's tools"), prepared.records));
            }
        }
        Source::UserQuery => {
            let rewriter = match op {
                Operator::CP => opts.complicator.as_deref(),
                Operator::AN => opts.noise.as_deref(),
                _ => None,
            };
            match perturb_query::apply(&case.query, op, seed, rewriter) {
                Ok((query, record)) => {
                    prepared.query = query.text;
                    prepared.records.push(record);
                }
                Err(e) => {
                    let reason = e.to_string();
                    return Err((reason.clone(), vec![skip_record(op, seed, "query", reason)]));
                }
            }
        }
        Source::ToolReturn => {
            let applicable = case
                .scripted_returns
                .iter()
                .any(|r| perturb_return::apply_outcome(&r.tool_return, op, &opts.return_options).is_ok());
            if !applicable {
                return Err((format!("{op} applies to none of the case's tool returns"), Vec::new()));
            }
        }
    }
    Ok(prepared)
}

/// Observation for a call: the scripted return, or an error text when the
/// corpus has none for these arguments.
fn lookup_observation(case: &TestCase, invocation: &ObservedInvocation) -> ToolReturn {
    if case.tool(&invocation.tool_name).is_none() {
        return ToolReturn::Raw(format!("Error: unknown tool `{}`.", invocation.tool_name));
    }
    match case.lookup_return(&invocation.tool_name, &invocation.arguments) {
        Some(ret) => ret.clone(),
        None => ToolReturn::Raw(format!(
            "Error: {}() returned no result for arguments {}.",
            invocation.tool_name,
            canonical_string(&serde_json::Value::Object(invocation.arguments.clone()))
        )),
    }
}

/// Runs `case` under `operator` (or unperturbed when `None`).
///
/// `donor_pool` supplies foreign descriptions for WD; pass every tool of
/// the corpus.
pub fn run_case(
    case: &TestCase,
    operator: Option<Operator>,
    seed: u64,
    donor_pool: &[ToolDocument],
    driver: &dyn AgentDriver,
    opts: &RunOptions,
) -> Result<Trajectory, DriverError> {
    let mut trajectory = Trajectory {
        case_id: case.case_id.clone(),
        operator,
        seed,
        driver_id: driver.id(),
        template_version: TEMPLATE_VERSION.to_string(),
        query: case.query.text.clone(),
        perturbations: Vec::new(),
        steps: Vec::new(),
        final_answer: None,
        truncations: Vec::new(),
        outcome: Outcome::StepLimitExceeded,
    };
    let prepared = match prepare_inputs(case, operator, seed, donor_pool, opts) {
        Ok(p) => p,
        Err((reason, records)) => {
            trajectory.perturbations = records;
            trajectory.outcome = Outcome::Skipped { reason };
            return Ok(trajectory);
        }
    };
    trajectory.query = prepared.query.clone();
    trajectory.perturbations = prepared.records;

    let mut ctx = AgentContext::new(case.case_id.clone(), operator, prepared.query, prepared.tools);
    ctx.max_observation_length = opts.max_observation_length;
    let return_op = operator.filter(|op| op.source() == Source::ToolReturn);

    for step in 0..opts.step_limit {
        match driver.next_step(&ctx)? {
            AgentStep::Final { answer, .. } => {
                trajectory.final_answer = Some(answer);
                trajectory.outcome = Outcome::Completed;
                break;
            }
            AgentStep::Invoke { thought, invocation } => {
                let mut observation = lookup_observation(case, &invocation);
                if let Some(op) = return_op {
                    let target = format!("observation[{step}]");
                    match perturb_return::apply(&observation, op, seed, &target, &opts.return_options) {
                        Ok((ret, record)) => {
                            observation = ret;
                            trajectory.perturbations.push(record);
                        }
                        Err(e) => trajectory
                            .perturbations
                            .push(skip_record(op, seed, &target, e.to_string())),
                    }
                }
                let rendered = observation.render();
                let (shown, cut) = truncate_observation(&rendered, opts.max_observation_length);
                if cut {
                    trajectory.truncations.push(TruncationEvent {
                        step,
                        original_length: rendered.chars().count(),
                        truncated_length: shown.chars().count(),
                    });
                }
                ctx.steps.push(StepRecord {
                    thought,
                    invocation,
                    observation: shown.to_string(),
                });
            }
        }
    }
    trajectory.steps = ctx.steps;
    Ok(trajectory)
}
