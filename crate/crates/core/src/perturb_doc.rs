//! Tool-document operators: RD, RE, WD, WT, SD and CO.
//!
//! Each operator is a pure function of its input document (plus a seed or a
//! donor pool where the operator needs one). An operator that finds nothing
//! to perturb returns an error instead of the unchanged document, so that
//! campaigns can keep unperturbable cases out of failure-rate denominators.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ParamType, ToolDocument};
use crate::operator::{Operator, PerturbationRecord};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DocPerturbError {
    #[error("document has no required parameter")]
    NoRequiredParams,
    #[error("document has no usage examples")]
    NoExamples,
    #[error("no donor description from another tool")]
    NoDonor,
    #[error("document has fewer than two parameters")]
    TooFewParams,
    #[error("no pair of parameters with differing descriptions")]
    NoDistinctPair,
    #[error("invalid parameter pair ({0}, {1}) for {2} parameters")]
    InvalidPair(usize, usize, usize),
    #[error("{0} is not a tool-document operator")]
    WrongSource(Operator),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DonorDraw {
    pub param: String,
    pub donor_tool: String,
    pub donor_param: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DocDetails {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub changed_params: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<(usize, usize)>,
    /// `permutation[i]` is the index whose description moved to position `i`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub donors: Vec<DonorDraw>,
    /// Parameters whose donor description equals their own.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub collisions: Vec<String>,
    /// Ranges removed because the new type is not numeric.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_ranges: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocOutcome {
    pub doc: ToolDocument,
    pub details: DocDetails,
}

/// Everything needed to apply one document operator.
#[derive(Debug, Clone)]
pub struct DocPerturbSpec<'a> {
    pub operator: Operator,
    pub seed: u64,
    pub sd_pair: Option<(usize, usize)>,
    pub donor_pool: &'a [ToolDocument],
}

impl DocPerturbSpec<'_> {
    pub fn new(operator: Operator, seed: u64) -> Self {
        DocPerturbSpec {
            operator,
            seed,
            sd_pair: None,
            donor_pool: &[],
        }
    }
}

/// Applies the operator named in `spec` and builds its log record.
pub fn apply(doc: &ToolDocument, spec: &DocPerturbSpec) -> Result<(ToolDocument, PerturbationRecord), DocPerturbError> {
    let outcome = match spec.operator {
        Operator::RD => rd(doc),
        Operator::RE => re(doc),
        Operator::WD => wd(doc, spec.donor_pool, spec.seed),
        Operator::WT => Ok(wt(doc)),
        Operator::SD => sd(doc, spec.sd_pair),
        Operator::CO => co(doc, spec.seed),
        other => Err(DocPerturbError::WrongSource(other)),
    }?;
    let record = PerturbationRecord {
        operator: spec.operator,
        seed: spec.seed,
        target: doc.tool_name.clone(),
        skipped: None,
        details: serde_json::to_value(&outcome.details).expect("details serialize"),
    };
    Ok((outcome.doc, record))
}

/// Removes the descriptions of required parameters.
pub fn rd(doc: &ToolDocument) -> Result<DocOutcome, DocPerturbError> {
    if !doc.parameters.iter().any(|p| p.required) {
        return Err(DocPerturbError::NoRequiredParams);
    }
    let mut out = doc.clone();
    let mut details = DocDetails::default();
    for p in out.parameters.iter_mut().filter(|p| p.required) {
        p.description.clear();
        details.changed_params.push(p.name.clone());
    }
    Ok(DocOutcome { doc: out, details })
}

/// Erases every usage example, document-level and per-parameter.
pub fn re(doc: &ToolDocument) -> Result<DocOutcome, DocPerturbError> {
    let param_examples = doc.parameters.iter().filter(|p| p.example.is_some()).count();
    if doc.usage_examples.is_empty() && param_examples == 0 {
        return Err(DocPerturbError::NoExamples);
    }
    let mut out = doc.clone();
    out.usage_examples.clear();
    let mut details = DocDetails::default();
    for p in &mut out.parameters {
        if p.example.take().is_some() {
            details.changed_params.push(p.name.clone());
        }
    }
    Ok(DocOutcome { doc: out, details })
}

/// Replaces every parameter description with one taken from another tool.
pub fn wd(doc: &ToolDocument, donors: &[ToolDocument], seed: u64) -> Result<DocOutcome, DocPerturbError> {
    let mut pool: Vec<(&str, &str, &str)> = donors
        .iter()
        .filter(|d| d.tool_name != doc.tool_name)
        .flat_map(|d| {
            d.parameters
                .iter()
                .filter(|p| !p.description.is_empty())
                .map(move |p| (d.tool_name.as_str(), p.name.as_str(), p.description.as_str()))
        })
        .collect();
    if pool.is_empty() {
        return Err(DocPerturbError::NoDonor);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);

    let mut out = doc.clone();
    let mut details = DocDetails::default();
    let n = pool.len();
    for (i, p) in out.parameters.iter_mut().enumerate() {
        let start = i % n;
        let pick = (0..n)
            .map(|k| pool[(start + k) % n])
            .find(|(_, _, desc)| *desc != p.description);
        let (tool, param, desc) = match pick {
            Some(found) => found,
            None => {
                details.collisions.push(p.name.clone());
                pool[start]
            }
        };
        details.donors.push(DonorDraw {
            param: p.name.clone(),
            donor_tool: tool.to_string(),
            donor_param: param.to_string(),
        });
        p.description = desc.to_string();
    }
    Ok(DocOutcome { doc: out, details })
}

/// The fixed type substitution used by WT. No type maps to itself.
pub fn wrong_type(t: ParamType) -> ParamType {
    match t {
        ParamType::String => ParamType::Integer,
        ParamType::Integer => ParamType::Boolean,
        ParamType::Number => ParamType::String,
        ParamType::Boolean => ParamType::Array,
        ParamType::Array => ParamType::Object,
        ParamType::Object => ParamType::String,
    }
}

/// Changes every parameter type through [`wrong_type`].
pub fn wt(doc: &ToolDocument) -> DocOutcome {
    let mut out = doc.clone();
    let mut details = DocDetails::default();
    for p in &mut out.parameters {
        p.ptype = wrong_type(p.ptype);
        details.changed_params.push(p.name.clone());
        // a range is only well-formed on numeric types
        if !p.ptype.is_numeric() && p.range.take().is_some() {
            details.dropped_ranges.push(p.name.clone());
        }
    }
    DocOutcome { doc: out, details }
}

/// Swaps the descriptions of two parameters. Without an explicit pair, the
/// first pair (in index order) whose descriptions differ is used.
pub fn sd(doc: &ToolDocument, pair: Option<(usize, usize)>) -> Result<DocOutcome, DocPerturbError> {
    let params = &doc.parameters;
    let n = params.len();
    if n < 2 {
        return Err(DocPerturbError::TooFewParams);
    }
    let (i, j) = match pair {
        Some((i, j)) => {
            if i == j || i >= n || j >= n {
                return Err(DocPerturbError::InvalidPair(i, j, n));
            }
            if params[i].description == params[j].description {
                return Err(DocPerturbError::NoDistinctPair);
            }
            (i, j)
        }
        None => (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .find(|&(i, j)| params[i].description != params[j].description)
            .ok_or(DocPerturbError::NoDistinctPair)?,
    };
    let mut out = doc.clone();
    let di = std::mem::take(&mut out.parameters[i].description);
    let dj = std::mem::replace(&mut out.parameters[j].description, di);
    out.parameters[i].description = dj;
    let details = DocDetails {
        changed_params: vec![params[i].name.clone(), params[j].name.clone()],
        pair: Some((i, j)),
        ..DocDetails::default()
    };
    Ok(DocOutcome { doc: out, details })
}

/// Reassigns descriptions to parameters by a seeded non-identity permutation.
/// Names keep their positions. When the descriptions are not all equal the
/// drawn permutation is also guaranteed to change at least one of them.
pub fn co(doc: &ToolDocument, seed: u64) -> Result<DocOutcome, DocPerturbError> {
    let n = doc.parameters.len();
    if n < 2 {
        return Err(DocPerturbError::TooFewParams);
    }
    let descs: Vec<&str> = doc.parameters.iter().map(|p| p.description.as_str()).collect();
    let all_equal = descs.windows(2).all(|w| w[0] == w[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let identity: Vec<usize> = (0..n).collect();
    let perm = loop {
        let mut candidate = identity.clone();
        candidate.shuffle(&mut rng);
        if candidate == identity {
            continue;
        }
        if !all_equal && candidate.iter().enumerate().all(|(i, &k)| descs[i] == descs[k]) {
            continue;
        }
        break candidate;
    };
    let mut out = doc.clone();
    let mut details = DocDetails::default();
    for (i, &k) in perm.iter().enumerate() {
        out.parameters[i].description = descs[k].to_string();
        if descs[i] != descs[k] {
            details.changed_params.push(doc.parameters[i].name.clone());
        }
    }
    details.permutation = Some(perm);
    Ok(DocOutcome { doc: out, details })
}
