//! The fifteen perturbation operators and the record each application leaves
//! in the campaign log.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Which parameter-information source an operator perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    ToolDocument,
    UserQuery,
    ToolReturn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operator {
    RD,
    RE,
    WD,
    SD,
    CO,
    WT,
    RPF,
    RPL,
    CP,
    AN,
    FK,
    AP,
    CK,
    UK,
    CF,
}

impl Operator {
    /// Report column order.
    pub const ALL: [Operator; 15] = [
        Operator::RD,
        Operator::RE,
        Operator::WD,
        Operator::SD,
        Operator::CO,
        Operator::WT,
        Operator::RPF,
        Operator::RPL,
        Operator::CP,
        Operator::AN,
        Operator::FK,
        Operator::AP,
        Operator::CK,
        Operator::UK,
        Operator::CF,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Operator::RD => "RD",
            Operator::RE => "RE",
            Operator::WD => "WD",
            Operator::SD => "SD",
            Operator::CO => "CO",
            Operator::WT => "WT",
            Operator::RPF => "RPF",
            Operator::RPL => "RPL",
            Operator::CP => "CP",
            Operator::AN => "AN",
            Operator::FK => "FK",
            Operator::AP => "AP",
            Operator::CK => "CK",
            Operator::UK => "UK",
            Operator::CF => "CF",
        }
    }

    pub fn source(self) -> Source {
        use Operator::*;
        match self {
            RD | RE | WD | SD | CO | WT => Source::ToolDocument,
            RPF | RPL | CP | AN => Source::UserQuery,
            FK | AP | CK | UK | CF => Source::ToolReturn,
        }
    }

    /// Parses a comma-separated operator list. `all` selects every operator.
    pub fn parse_list(list: &str) -> Result<Vec<Operator>, UnknownOperator> {
        if list.trim().eq_ignore_ascii_case("all") {
            return Ok(Operator::ALL.to_vec());
        }
        let mut out = Vec::new();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let op: Operator = item.parse()?;
            if !out.contains(&op) {
                out.push(op);
            }
        }
        // campaigns always run in report column order
        out.sort_by_key(|op| Operator::ALL.iter().position(|o| o == op));
        Ok(out)
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown operator `{0}`")]
pub struct UnknownOperator(pub String);

impl FromStr for Operator {
    type Err = UnknownOperator;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| *c != '_').collect::<String>().to_ascii_uppercase();
        Operator::ALL
            .into_iter()
            .find(|op| op.id() == norm)
            .ok_or_else(|| UnknownOperator(s.to_string()))
    }
}

/// Seed for one (operator, case) pair, derived from the campaign seed.
pub fn derive_seed(campaign_seed: u64, operator: Operator, case_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(campaign_seed.to_le_bytes());
    h.update(operator.id().as_bytes());
    h.update([0u8]);
    h.update(case_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// What one operator application did, in enough detail to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRecord {
    pub operator: Operator,
    pub seed: u64,
    /// Which artifact was perturbed: a tool name, `query`, or `observation[i]`.
    pub target: String,
    /// `None` when the operator was applied; otherwise why it was skipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub details: Value,
}
