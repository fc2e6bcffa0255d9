//! Report files: `report.json`, `report_table.csv` and `report.md`.
//!
//! Reports are pure functions of the campaign result; regenerating them
//! from the same log reproduces the same bytes.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::campaign::{CampaignHeader, CampaignResult};
use crate::classifier::Category;
use crate::metrics::{
    category_rates, failure_rate, invocation_counts, rouge_exceedance, transfer_matrix, CaseResult, FailureRate,
    OperatorResults, Ratio, RougeExceedance, SkippedCase, ROUGE_THRESHOLD,
};
use crate::operator::Operator;
use crate::runner::Outcome;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report_table.csv";
pub const REPORT_MD: &str = "report.md";

const ROUGE_ROWS: [&str; 3] = ["Rouge-L", "Rouge-L (TD)", "Rouge-L (SM)"];
const OVERALL_ROW: &str = "Overall";

/// All numbers of one operator column.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSummary<'a> {
    pub results: &'a OperatorResults,
    pub overall: Option<FailureRate>,
    pub categories: Option<[FailureRate; 5]>,
    pub invocations: usize,
    pub invocation_counts: [u64; 5],
    pub rouge: RougeExceedance,
    pub step_limit_exceeded: usize,
}

impl<'a> OperatorSummary<'a> {
    pub fn new(results: &'a OperatorResults) -> Self {
        let cases = &results.cases;
        OperatorSummary {
            results,
            overall: failure_rate(cases).ok(),
            categories: category_rates(cases).ok(),
            invocations: cases.iter().map(|c| c.labels.len()).sum(),
            invocation_counts: invocation_counts(cases),
            rouge: rouge_exceedance(cases.iter().flat_map(|c| &c.labels).map(|l| &l.label), ROUGE_THRESHOLD),
            step_limit_exceeded: cases.iter().filter(|c| c.outcome == Outcome::StepLimitExceeded).count(),
        }
    }

    fn overall_cell(&self) -> String {
        self.overall.map_or("n/a".into(), |fr| fr.percent())
    }

    fn category_cell(&self, cat: Category) -> String {
        self.categories.map_or("n/a".into(), |rates| rates[cat.index()].percent())
    }

    /// Grid rows in output order: categories, Rouge-L rows, overall.
    fn column(&self) -> Vec<String> {
        let mut col: Vec<String> = Category::ALL.iter().map(|c| self.category_cell(*c)).collect();
        col.push(self.rouge.joint.percent());
        col.push(self.rouge.td.percent());
        col.push(self.rouge.sm.percent());
        col.push(self.overall_cell());
        col
    }
}

fn row_titles() -> Vec<&'static str> {
    let mut rows: Vec<&str> = Category::ALL.iter().map(|c| c.title()).collect();
    rows.extend(ROUGE_ROWS);
    rows.push(OVERALL_ROW);
    rows
}

/// Grid cells indexed `[row][column]`, one column per operator in report
/// order; operators outside the campaign are `n/a`.
fn grid(summaries: &[OperatorSummary]) -> Vec<Vec<String>> {
    let n_rows = row_titles().len();
    let columns: Vec<Vec<String>> = Operator::ALL
        .iter()
        .map(|op| match summaries.iter().find(|s| s.results.operator == *op) {
            Some(s) => s.column(),
            None => vec!["n/a".to_string(); n_rows],
        })
        .collect();
    (0..n_rows).map(|r| columns.iter().map(|c| c[r].clone()).collect()).collect()
}

pub fn render_csv(result: &CampaignResult) -> String {
    let summaries: Vec<_> = result.operators.iter().map(OperatorSummary::new).collect();
    let mut out = String::from("category");
    for op in Operator::ALL {
        out.push(',');
        out.push_str(op.id());
    }
    out.push('\n');
    for (title, cells) in row_titles().iter().zip(grid(&summaries)) {
        out.push_str(title);
        for cell in cells {
            out.push(',');
            out.push_str(&cell);
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct RateJson {
    n_pass: u64,
    n_total: u64,
    rate: String,
}

impl From<FailureRate> for RateJson {
    fn from(fr: FailureRate) -> Self {
        RateJson {
            n_pass: fr.n_pass,
            n_total: fr.n_total,
            rate: fr.percent(),
        }
    }
}

#[derive(Serialize)]
struct RatioJson {
    hits: u64,
    total: u64,
    rate: String,
}

impl From<Ratio> for RatioJson {
    fn from(r: Ratio) -> Self {
        RatioJson {
            hits: r.num,
            total: r.den,
            rate: r.percent(),
        }
    }
}

#[derive(Serialize)]
struct CategoryJson {
    category: Category,
    case_rate: Option<RateJson>,
    invocations: u64,
}

#[derive(Serialize)]
struct RougeJson {
    threshold: f64,
    joint: RatioJson,
    task_deviation: RatioJson,
    specification_mismatch: RatioJson,
}

#[derive(Serialize)]
struct OperatorJson<'a> {
    operator: Operator,
    failure_rate: Option<RateJson>,
    skipped: &'a [SkippedCase],
    step_limit_exceeded: usize,
    invocations: usize,
    categories: Vec<CategoryJson>,
    rouge: RougeJson,
    cases: &'a [CaseResult],
}

#[derive(Serialize)]
struct MatrixJson {
    categories: [Category; 5],
    counts: [[u64; 5]; 5],
    normalized: [[Option<f64>; 5]; 5],
}

#[derive(Serialize)]
struct ReportJson<'a> {
    metadata: &'a CampaignHeader,
    overall: Option<RateJson>,
    operators: Vec<OperatorJson<'a>>,
    transfer_matrix: MatrixJson,
}

fn overall(result: &CampaignResult) -> Option<FailureRate> {
    let cases: Vec<CaseResult> = result.all_cases().cloned().collect();
    failure_rate(&cases).ok()
}

pub fn render_json(result: &CampaignResult) -> String {
    let matrix = transfer_matrix(result.all_cases().flat_map(|c| &c.labels).map(|l| &l.label));
    let report = ReportJson {
        metadata: &result.header,
        overall: overall(result).map(Into::into),
        operators: result
            .operators
            .iter()
            .map(|r| {
                let s = OperatorSummary::new(r);
                OperatorJson {
                    operator: r.operator,
                    failure_rate: s.overall.map(Into::into),
                    skipped: &r.skipped,
                    step_limit_exceeded: s.step_limit_exceeded,
                    invocations: s.invocations,
                    categories: Category::ALL
                        .iter()
                        .map(|c| CategoryJson {
                            category: *c,
                            case_rate: s.categories.map(|rates| rates[c.index()].into()),
                            invocations: s.invocation_counts[c.index()],
                        })
                        .collect(),
                    rouge: RougeJson {
                        threshold: ROUGE_THRESHOLD,
                        joint: s.rouge.joint.into(),
                        task_deviation: s.rouge.td.into(),
                        specification_mismatch: s.rouge.sm.into(),
                    },
                    cases: &r.cases,
                }
            })
            .collect(),
        transfer_matrix: MatrixJson {
            categories: Category::ALL,
            counts: matrix.counts,
            normalized: matrix.normalized(),
        },
    };
    let mut out = serde_json::to_string_pretty(&report).expect("report serializes");
    out.push('\n');
    out
}

fn md_table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for row in rows {
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
    out.push('\n');
}

fn short(cat: Category) -> &'static str {
    match cat {
        Category::TaskDeviation => "TD",
        Category::SpecificationMismatch => "SM",
        Category::HallucinationName => "HN",
        Category::MissingInformation => "MI",
        Category::RedundantInformation => "RI",
    }
}

pub fn render_markdown(result: &CampaignResult) -> String {
    let h = &result.header;
    let summaries: Vec<_> = result.operators.iter().map(OperatorSummary::new).collect();
    let mut out = String::from("# Robustness campaign report\n\n");
    let _ = writeln!(out, "- corpus: `{}`", h.corpus_hash);
    let _ = writeln!(out, "- driver: `{}`", h.driver_id);
    let _ = writeln!(out, "- prompt template: `{}`", h.template_version);
    let _ = writeln!(out, "- seed: {}", h.seed);
    let _ = writeln!(out, "- cases: {}", h.cases.len());
    let _ = writeln!(
        out,
        "- overall failure rate: {}",
        overall(result).map_or("n/a".into(), |fr| format!("{}% ({} of {} cases pass)", fr.percent(), fr.n_pass, fr.n_total))
    );
    out.push('\n');

    out.push_str("## Failure rate (%) by category and operator\n\n");
    let mut header = vec!["Category".to_string()];
    header.extend(Operator::ALL.iter().map(|o| o.id().to_string()));
    let rows: Vec<Vec<String>> = row_titles()
        .iter()
        .zip(grid(&summaries))
        .map(|(t, cells)| std::iter::once(t.to_string()).chain(cells).collect())
        .collect();
    md_table(&mut out, &header, &rows);
    let _ = writeln!(
        out,
        "Rouge-L rows give the share of flagged deviations whose similarity to the oracle value is at least {ROUGE_THRESHOLD}. `n/a` marks an empty denominator.\n"
    );

    out.push_str("## Cases per operator\n\n");
    let header: Vec<String> = ["Operator", "Attempted", "Passed", "Skipped", "Step limit", "FR (%)"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<String>> = summaries
        .iter()
        .map(|s| {
            vec![
                s.results.operator.id().to_string(),
                s.results.cases.len().to_string(),
                s.results.cases.iter().filter(|c| c.pass).count().to_string(),
                s.results.skipped.len().to_string(),
                s.step_limit_exceeded.to_string(),
                s.overall_cell(),
            ]
        })
        .collect();
    md_table(&mut out, &header, &rows);

    let matrix = transfer_matrix(result.all_cases().flat_map(|c| &c.labels).map(|l| &l.label));
    out.push_str("## Failure transfer (failing invocations)\n\n");
    let mut header = vec![String::new()];
    header.extend(Category::ALL.iter().map(|c| short(*c).to_string()));
    let rows: Vec<Vec<String>> = Category::ALL
        .iter()
        .map(|a| {
            std::iter::once(short(*a).to_string())
                .chain(Category::ALL.iter().map(|b| matrix.get(*a, *b).to_string()))
                .collect()
        })
        .collect();
    md_table(&mut out, &header, &rows);
    out.push_str("Row-normalized (share of row-category failures that also show the column category):\n\n");
    let normalized = matrix.normalized();
    let rows: Vec<Vec<String>> = Category::ALL
        .iter()
        .map(|a| {
            std::iter::once(short(*a).to_string())
                .chain(
                    normalized[a.index()]
                        .iter()
                        .map(|v| v.map_or("n/a".into(), |x| format!("{x:.2}"))),
                )
                .collect()
        })
        .collect();
    md_table(&mut out, &header, &rows);
    out.truncate(out.trim_end().len());
    out.push('\n');
    out
}

/// Writes the three report files into `dir` and returns their paths.
pub fn emit_report(result: &CampaignResult, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let files = [
        (REPORT_JSON, render_json(result)),
        (REPORT_CSV, render_csv(result)),
        (REPORT_MD, render_markdown(result)),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
