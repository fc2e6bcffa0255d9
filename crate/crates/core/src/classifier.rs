//! Differential classification of observed tool invocations against the
//! oracle and the tool schema, into five parameter-failure categories.
//!
//! Detector partition: a parameter name outside the schema only ever counts
//! as a hallucinated name; redundancy and specification checks look at
//! in-schema names only. Classification always uses the original tool
//! documents, never the perturbed ones the agent saw.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::canonical::{canonical_eq, value_text};
use crate::corpus::{OracleInvocation, SpecRule, ToolDocument};
use crate::rouge::rouge_l_text;

/// Bumped whenever classification semantics change; stamped on log labels.
pub const CLASSIFIER_VERSION: &str = "classifier-v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClassifyError {
    #[error("invocation of `{observed}` checked against `{expected}`")]
    ToolMismatch { observed: String, expected: String },
}

/// A tool call as the agent emitted it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedInvocation {
    pub tool_name: String,
    pub arguments: Map<String, Value>,
    #[serde(default)]
    pub raw_text: String,
    /// Set when `raw_text` could not be parsed cleanly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
}

impl ObservedInvocation {
    pub fn new(tool_name: impl Into<String>, arguments: Map<String, Value>) -> Self {
        let raw_text = serde_json::to_string(&arguments).expect("JSON values always serialize");
        ObservedInvocation {
            tool_name: tool_name.into(),
            arguments,
            raw_text,
            parse_error: None,
        }
    }
}

/// The five categories, in report row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    TaskDeviation,
    SpecificationMismatch,
    HallucinationName,
    MissingInformation,
    RedundantInformation,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::TaskDeviation,
        Category::SpecificationMismatch,
        Category::HallucinationName,
        Category::MissingInformation,
        Category::RedundantInformation,
    ];

    pub fn title(self) -> &'static str {
        match self {
            Category::TaskDeviation => "Task Deviation",
            Category::SpecificationMismatch => "Specification Mismatch",
            Category::HallucinationName => "Hallucination Name",
            Category::MissingInformation => "Missing Information",
            Category::RedundantInformation => "Redundant Information",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    UnknownParameter,
    UnknownTool,
    MissingSchemaRequired,
    MissingTaskNeeded,
    NotAttempted,
    ExtraParameter,
    TypeMismatch,
    EnumViolation,
    FormatViolation,
    RangeViolation,
    ValueDeviation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub param_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Value>,
    pub rule: Rule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rouge: Option<f64>,
}

impl Evidence {
    fn new(param_name: &str, rule: Rule) -> Self {
        Evidence {
            param_name: param_name.to_string(),
            observed: None,
            expected: None,
            rule,
            detail: None,
            rouge: None,
        }
    }
}

/// Outcome of one detector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Detection {
    pub flag: bool,
    pub evidence: Vec<Evidence>,
}

impl Detection {
    fn from_evidence(evidence: Vec<Evidence>) -> Self {
        Detection {
            flag: !evidence.is_empty(),
            evidence,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureLabel {
    pub missing_information: bool,
    pub redundant_information: bool,
    pub hallucination_name: bool,
    pub task_deviation: bool,
    pub specification_mismatch: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub evidence: BTreeMap<Category, Vec<Evidence>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rouge_td: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rouge_sm: Option<f64>,
}

impl FailureLabel {
    pub fn flag(&self, category: Category) -> bool {
        match category {
            Category::TaskDeviation => self.task_deviation,
            Category::SpecificationMismatch => self.specification_mismatch,
            Category::HallucinationName => self.hallucination_name,
            Category::MissingInformation => self.missing_information,
            Category::RedundantInformation => self.redundant_information,
        }
    }

    fn set(&mut self, category: Category, detection: Detection) {
        let flag = detection.flag;
        match category {
            Category::TaskDeviation => self.task_deviation = flag,
            Category::SpecificationMismatch => self.specification_mismatch = flag,
            Category::HallucinationName => self.hallucination_name = flag,
            Category::MissingInformation => self.missing_information = flag,
            Category::RedundantInformation => self.redundant_information = flag,
        }
        if flag {
            self.evidence.insert(category, detection.evidence);
        }
    }

    /// No failure pattern detected.
    pub fn passes(&self) -> bool {
        Category::ALL.iter().all(|c| !self.flag(*c))
    }

    pub fn categories(&self) -> Vec<Category> {
        Category::ALL.into_iter().filter(|c| self.flag(*c)).collect()
    }

    pub fn evidence_for(&self, category: Category) -> &[Evidence] {
        self.evidence.get(&category).map_or(&[], Vec::as_slice)
    }
}

fn same_tool(obs: &ObservedInvocation, expected: &str) -> Result<(), ClassifyError> {
    if obs.tool_name == expected {
        Ok(())
    } else {
        Err(ClassifyError::ToolMismatch {
            observed: obs.tool_name.clone(),
            expected: expected.to_string(),
        })
    }
}

/// Argument names the tool does not recognise (case-sensitive).
pub fn detect_hallucination_name(obs: &ObservedInvocation, doc: &ToolDocument) -> Result<Detection, ClassifyError> {
    same_tool(obs, &doc.tool_name)?;
    let evidence = obs
        .arguments
        .iter()
        .filter(|(name, _)| !doc.has_param(name))
        .map(|(name, value)| Evidence {
            observed: Some(value.clone()),
            ..Evidence::new(name, Rule::UnknownParameter)
        })
        .collect();
    Ok(Detection::from_evidence(evidence))
}

/// Needed parameters the call leaves out.
pub fn detect_missing(
    obs: &ObservedInvocation,
    oracle: &OracleInvocation,
    doc: &ToolDocument,
) -> Result<Detection, ClassifyError> {
    same_tool(obs, &oracle.tool_name)?;
    same_tool(obs, &doc.tool_name)?;
    let evidence = oracle
        .needed_params
        .iter()
        .filter(|name| !obs.arguments.contains_key(*name))
        .map(|name| {
            let rule = if doc.param(name).is_some_and(|p| p.required) {
                Rule::MissingSchemaRequired
            } else {
                Rule::MissingTaskNeeded
            };
            Evidence {
                expected: oracle.arguments.get(name).cloned(),
                ..Evidence::new(name, rule)
            }
        })
        .collect();
    Ok(Detection::from_evidence(evidence))
}

/// In-schema arguments the oracle does not set.
pub fn detect_redundant(
    obs: &ObservedInvocation,
    oracle: &OracleInvocation,
    doc: &ToolDocument,
) -> Result<Detection, ClassifyError> {
    same_tool(obs, &oracle.tool_name)?;
    same_tool(obs, &doc.tool_name)?;
    let evidence = obs
        .arguments
        .iter()
        .filter(|(name, _)| doc.has_param(name) && !oracle.arguments.contains_key(*name))
        .map(|(name, value)| Evidence {
            observed: Some(value.clone()),
            ..Evidence::new(name, Rule::ExtraParameter)
        })
        .collect();
    Ok(Detection::from_evidence(evidence))
}

/// In-schema arguments whose values break their parameter specification.
pub fn detect_spec_mismatch(obs: &ObservedInvocation, doc: &ToolDocument) -> Result<Detection, ClassifyError> {
    same_tool(obs, &doc.tool_name)?;
    let mut evidence = Vec::new();
    for (name, value) in &obs.arguments {
        let Some(spec) = doc.param(name) else { continue };
        for v in spec.violations(value) {
            let rule = match v.rule {
                SpecRule::Type => Rule::TypeMismatch,
                SpecRule::Enum => Rule::EnumViolation,
                SpecRule::Format => Rule::FormatViolation,
                SpecRule::Range => Rule::RangeViolation,
            };
            evidence.push(Evidence {
                observed: Some(value.clone()),
                detail: Some(v.detail),
                ..Evidence::new(name, rule)
            });
        }
    }
    Ok(Detection::from_evidence(evidence))
}

/// Arguments present in both call and oracle whose values differ
/// canonically. Returns the Rouge-L similarity of the deviating values.
pub fn detect_task_deviation(
    obs: &ObservedInvocation,
    oracle: &OracleInvocation,
) -> Result<(Detection, Option<f64>), ClassifyError> {
    same_tool(obs, &oracle.tool_name)?;
    let mut evidence = Vec::new();
    for (name, value) in &obs.arguments {
        let Some(expected) = oracle.arguments.get(name) else { continue };
        if canonical_eq(value, expected) {
            continue;
        }
        evidence.push(Evidence {
            observed: Some(value.clone()),
            expected: Some(expected.clone()),
            rouge: Some(rouge_l_text(&value_text(value), &value_text(expected))),
            ..Evidence::new(name, Rule::ValueDeviation)
        });
    }
    let rouge = joint_rouge(&evidence, oracle);
    Ok((Detection::from_evidence(evidence), rouge))
}

/// Rouge-L of the concatenated observed values against the concatenated
/// oracle values, over the evidence parameters the oracle sets, in name
/// order. `None` when the oracle sets none of them.
fn joint_rouge(evidence: &[Evidence], oracle: &OracleInvocation) -> Option<f64> {
    let mut pairs: BTreeMap<&str, (String, String)> = BTreeMap::new();
    for e in evidence {
        let (Some(obs), Some(exp)) = (&e.observed, oracle.arguments.get(&e.param_name)) else {
            continue;
        };
        pairs.insert(&e.param_name, (value_text(obs), value_text(exp)));
    }
    if pairs.is_empty() {
        return None;
    }
    let (cand, refr): (Vec<String>, Vec<String>) = pairs.into_values().unzip();
    Some(rouge_l_text(&cand.join(" "), &refr.join(" ")))
}

/// Runs all five detectors. The label passes iff every flag is false.
pub fn classify_invocation(
    obs: &ObservedInvocation,
    oracle: &OracleInvocation,
    doc: &ToolDocument,
) -> Result<FailureLabel, ClassifyError> {
    let mut label = FailureLabel::default();
    label.set(Category::MissingInformation, detect_missing(obs, oracle, doc)?);
    label.set(Category::RedundantInformation, detect_redundant(obs, oracle, doc)?);
    label.set(Category::HallucinationName, detect_hallucination_name(obs, doc)?);
    let (deviation, rouge_td) = detect_task_deviation(obs, oracle)?;
    if deviation.flag {
        label.rouge_td = rouge_td;
    }
    label.set(Category::TaskDeviation, deviation);
    let mismatch = detect_spec_mismatch(obs, doc)?;
    if mismatch.flag {
        label.rouge_sm = joint_rouge(&mismatch.evidence, oracle);
    }
    label.set(Category::SpecificationMismatch, mismatch);
    Ok(label)
}

/// Checks that need only the schema, for calls no oracle entry covers.
fn classify_schema_only(obs: &ObservedInvocation, doc: &ToolDocument) -> Result<FailureLabel, ClassifyError> {
    let mut label = FailureLabel::default();
    label.set(Category::HallucinationName, detect_hallucination_name(obs, doc)?);
    label.set(Category::SpecificationMismatch, detect_spec_mismatch(obs, doc)?);
    Ok(label)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvocationLabel {
    /// Position in the observed trajectory; `None` for the synthetic label
    /// of an oracle invocation that was never attempted.
    pub step: Option<usize>,
    pub tool_name: String,
    pub oracle_index: Option<usize>,
    pub label: FailureLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryClassification {
    pub labels: Vec<InvocationLabel>,
    pub unattempted: Vec<usize>,
    pub case_pass: bool,
}

/// Aligns observed calls to oracle calls and labels each one.
///
/// The k-th call of a tool is compared with the k-th oracle call of that
/// tool; later calls (retries) are compared with the tool's last oracle
/// call. Calls to unknown tools are hallucinated names at tool level. Calls
/// to known tools the oracle never uses get schema-only checks. Every
/// oracle call that was never attempted yields a synthetic
/// missing-information label.
pub fn classify_trajectory(
    traj: &[ObservedInvocation],
    oracle: &[OracleInvocation],
    tools: &[ToolDocument],
) -> TrajectoryClassification {
    let mut by_tool: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, inv) in oracle.iter().enumerate() {
        by_tool.entry(inv.tool_name.as_str()).or_default().push(i);
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut attempted = vec![false; oracle.len()];
    let mut labels = Vec::with_capacity(traj.len());

    for (step, obs) in traj.iter().enumerate() {
        let name = obs.tool_name.as_str();
        let Some(doc) = tools.iter().find(|t| t.tool_name == name) else {
            let mut label = FailureLabel::default();
            label.set(
                Category::HallucinationName,
                Detection::from_evidence(vec![Evidence {
                    detail: Some(format!("unknown tool `{name}`")),
                    ..Evidence::new("", Rule::UnknownTool)
                }]),
            );
            labels.push(InvocationLabel {
                step: Some(step),
                tool_name: obs.tool_name.clone(),
                oracle_index: None,
                label,
            });
            continue;
        };
        let k = seen.entry(name).or_insert(0);
        let slots = by_tool.get(name).map_or(&[][..], Vec::as_slice);
        let oracle_index = slots.get(*k).or(slots.last()).copied();
        *k += 1;
        let label = match oracle_index {
            Some(oi) => {
                attempted[oi] = true;
                classify_invocation(obs, &oracle[oi], doc)
            }
            None => classify_schema_only(obs, doc),
        }
        .expect("tool names aligned above");
        labels.push(InvocationLabel {
            step: Some(step),
            tool_name: obs.tool_name.clone(),
            oracle_index,
            label,
        });
    }

    let unattempted: Vec<usize> = (0..oracle.len()).filter(|i| !attempted[*i]).collect();
    for &oi in &unattempted {
        let inv = &oracle[oi];
        let mut evidence: Vec<Evidence> = inv
            .needed_params
            .iter()
            .map(|p| Evidence {
                expected: inv.arguments.get(p).cloned(),
                ..Evidence::new(p, Rule::NotAttempted)
            })
            .collect();
        if evidence.is_empty() {
            evidence.push(Evidence::new("", Rule::NotAttempted));
        }
        let mut label = FailureLabel::default();
        label.set(Category::MissingInformation, Detection::from_evidence(evidence));
        labels.push(InvocationLabel {
            step: None,
            tool_name: inv.tool_name.clone(),
            oracle_index: Some(oi),
            label,
        });
    }

    let case_pass = labels.iter().all(|l| l.label.passes());
    TrajectoryClassification {
        labels,
        unattempted,
        case_pass,
    }
}
