//! Failure rates, Rouge-L exceedance and the failure-transfer matrix.
//!
//! Rates are kept as exact counts and only rendered at the edge, as
//! percentages with two decimals rounded half-up. An empty denominator
//! renders as `n/a`, never as zero.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{Category, FailureLabel, InvocationLabel};
use crate::operator::Operator;
use crate::runner::Outcome;

pub const ROUGE_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no attempted cases to compute a failure rate over")]
    EmptyCampaign,
}

/// `num / den` kept exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Self {
        Ratio { num, den }
    }

    pub fn value(self) -> Option<f64> {
        (self.den > 0).then(|| self.num as f64 / self.den as f64)
    }

    /// Percentage with two decimals, or `n/a`.
    pub fn percent(self) -> String {
        if self.den == 0 {
            return "n/a".into();
        }
        let hundredths = (self.num as u128 * 20_000 + self.den as u128) / (2 * self.den as u128);
        format!("{}.{:02}", hundredths / 100, hundredths % 100)
    }

    fn add(self, other: Ratio) -> Ratio {
        Ratio::new(self.num + other.num, self.den + other.den)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.percent())
    }
}

/// `FR = 1 - n_pass / n_total` over attempted cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRate {
    pub n_pass: u64,
    pub n_total: u64,
}

impl FailureRate {
    /// `1 − N_pass / N_total` as an exact ratio.
    pub fn ratio(self) -> Ratio {
        Ratio::new(self.n_total - self.n_pass, self.n_total)
    }

    pub fn value(self) -> f64 {
        self.ratio().value().unwrap_or(0.0)
    }

    pub fn percent(self) -> String {
        self.ratio().percent()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub seed: u64,
    pub outcome: Outcome,
    pub labels: Vec<InvocationLabel>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedCase {
    pub case_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorResults {
    pub operator: Operator,
    /// Attempted cases only; these form N_total.
    pub cases: Vec<CaseResult>,
    pub skipped: Vec<SkippedCase>,
}

pub fn failure_rate(cases: &[CaseResult]) -> Result<FailureRate, MetricsError> {
    if cases.is_empty() {
        return Err(MetricsError::EmptyCampaign);
    }
    Ok(FailureRate {
        n_pass: cases.iter().filter(|c| c.pass).count() as u64,
        n_total: cases.len() as u64,
    })
}

/// Per-category rates, in [`Category::ALL`] order. A case passes a category
/// when none of its invocation labels raises that flag.
pub fn category_rates(cases: &[CaseResult]) -> Result<[FailureRate; 5], MetricsError> {
    if cases.is_empty() {
        return Err(MetricsError::EmptyCampaign);
    }
    Ok(Category::ALL.map(|cat| FailureRate {
        n_pass: cases
            .iter()
            .filter(|c| c.labels.iter().all(|l| !l.label.flag(cat)))
            .count() as u64,
        n_total: cases.len() as u64,
    }))
}

/// Flagged invocations per category, in [`Category::ALL`] order.
pub fn invocation_counts(cases: &[CaseResult]) -> [u64; 5] {
    Category::ALL.map(|cat| {
        cases
            .iter()
            .flat_map(|c| &c.labels)
            .filter(|l| l.label.flag(cat))
            .count() as u64
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RougeExceedance {
    pub td: Ratio,
    pub sm: Ratio,
    /// TD and SM instances pooled.
    pub joint: Ratio,
}

/// Among invocations flagged TD (resp. SM) that carry a Rouge-L score, the
/// share scoring at least `threshold`.
pub fn rouge_exceedance<'a>(labels: impl IntoIterator<Item = &'a FailureLabel>, threshold: f64) -> RougeExceedance {
    let mut td = Ratio::default();
    let mut sm = Ratio::default();
    for label in labels {
        if let (true, Some(score)) = (label.task_deviation, label.rouge_td) {
            td.den += 1;
            td.num += u64::from(score >= threshold);
        }
        if let (true, Some(score)) = (label.specification_mismatch, label.rouge_sm) {
            sm.den += 1;
            sm.num += u64::from(score >= threshold);
        }
    }
    RougeExceedance {
        td,
        sm,
        joint: td.add(sm),
    }
}

/// Co-occurrence counts of failure categories over failing invocations,
/// indexed in [`Category::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub counts: [[u64; 5]; 5],
}

impl TransferMatrix {
    pub fn get(&self, a: Category, b: Category) -> u64 {
        self.counts[a.index()][b.index()]
    }

    /// `M[a][b] / M[a][a]`; `None` where category `a` never occurs.
    pub fn normalized(&self) -> [[Option<f64>; 5]; 5] {
        let mut out = [[None; 5]; 5];
        for (a, (row, counts)) in out.iter_mut().zip(&self.counts).enumerate() {
            let diag = counts[a];
            if diag == 0 {
                continue;
            }
            for (cell, &n) in row.iter_mut().zip(counts) {
                *cell = Some(n as f64 / diag as f64);
            }
        }
        out
    }
}

pub fn transfer_matrix<'a>(labels: impl IntoIterator<Item = &'a FailureLabel>) -> TransferMatrix {
    let mut m = TransferMatrix::default();
    for label in labels {
        let flags = label.categories();
        for a in &flags {
            for b in &flags {
                m.counts[a.index()][b.index()] += 1;
            }
        }
    }
    m
}
