//! Built-in five-case demonstration: one scripted agent transcript per
//! failure category, each of which must be classified as intended.

use serde::Serialize;

use crate::classifier::{classify_trajectory, Category};
use crate::corpus::parse_corpus;
use crate::replay::{parse_scripts, ReplayDriver};
use crate::runner::{run_case, RunOptions};

pub const DEMO_CORPUS: &str = include_str!("../fixtures/demo/corpus.json");
pub const DEMO_SCRIPTS: &str = include_str!("../fixtures/demo/scripts.json");

/// Category each demo case is meant to exhibit.
pub const DEMO_EXPECTATIONS: [(&str, Category); 5] = [
    ("hallucination-name", Category::HallucinationName),
    ("specification-mismatch", Category::SpecificationMismatch),
    ("task-deviation", Category::TaskDeviation),
    ("missing-information", Category::MissingInformation),
    ("redundant-information", Category::RedundantInformation),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoEntry {
    pub case_id: String,
    pub expected: Category,
    /// Every category raised anywhere in the trajectory, in report order.
    pub observed: Vec<Category>,
    /// Evidence items backing the expected category.
    pub evidence: usize,
}

impl DemoEntry {
    pub fn ok(&self) -> bool {
        self.observed.contains(&self.expected) && self.evidence > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoReport {
    pub entries: Vec<DemoEntry>,
}

impl DemoReport {
    pub fn passed(&self) -> usize {
        self.entries.iter().filter(|e| e.ok()).count()
    }

    pub fn all_ok(&self) -> bool {
        self.passed() == DEMO_EXPECTATIONS.len() && self.entries.len() == DEMO_EXPECTATIONS.len()
    }
}

/// Runs the shipped transcripts unperturbed and classifies them.
pub fn run_demo() -> Result<DemoReport, String> {
    let cases = parse_corpus(DEMO_CORPUS.as_bytes()).map_err(|e| e.to_string())?;
    let scripts = parse_scripts(DEMO_SCRIPTS.as_bytes()).map_err(|e| e.to_string())?;
    let driver = ReplayDriver::new(scripts, &cases).map_err(|e| e.to_string())?;
    let opts = RunOptions::default();
    let mut entries = Vec::new();
    for (case_id, expected) in DEMO_EXPECTATIONS {
        let case = cases
            .iter()
            .find(|c| c.case_id == case_id)
            .ok_or_else(|| format!("demo corpus lacks case `{case_id}`"))?;
        let trajectory = run_case(case, None, 0, &case.tools, &driver, &opts).map_err(|e| e.to_string())?;
        let classification = classify_trajectory(&trajectory.invocations(), &case.oracle, &case.tools);
        let observed = Category::ALL
            .into_iter()
            .filter(|c| classification.labels.iter().any(|l| l.label.flag(*c)))
            .collect();
        let evidence = classification
            .labels
            .iter()
            .map(|l| l.label.evidence_for(expected).len())
            .sum();
        entries.push(DemoEntry {
            case_id: case_id.to_string(),
            expected,
            observed,
            evidence,
        });
    }
    Ok(DemoReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_classifies_all_five() {
        let report = run_demo().unwrap();
        for e in &report.entries {
            assert!(e.ok(), "{e:?}");
        }
        assert!(report.all_ok());
        let by_id = |id: &str| report.entries.iter().find(|e| e.case_id == id).unwrap().observed.clone();
        assert_eq!(by_id("hallucination-name"), [Category::HallucinationName]);
        assert_eq!(by_id("task-deviation"), [Category::TaskDeviation]);
        assert_eq!(by_id("missing-information"), [Category::MissingInformation]);
        assert_eq!(by_id("redundant-information"), [Category::RedundantInformation]);
        // region is set although the worldwide query needs none
        assert_eq!(
            by_id("specification-mismatch"),
            [Category::SpecificationMismatch, Category::RedundantInformation]
        );
    }
}
