//! The 20-case replay campaign with planted outcomes and its hand count.

use std::fs;
use std::path::Path;

use paramfuzz::campaign::{classify_log, collect_results, read_log, run_campaign, CampaignConfig, LogEvent};
use paramfuzz::campaign::{corpus_hash, CampaignResult, LOG_FILE};
use paramfuzz::classifier::Category;
use paramfuzz::corpus::{filter_cases, parse_corpus, TestCase};
use paramfuzz::metrics::{category_rates, failure_rate, rouge_exceedance, transfer_matrix, ROUGE_THRESHOLD};
use paramfuzz::operator::Operator;
use paramfuzz::replay::{parse_scripts, ReplayDriver};
use paramfuzz::report::{emit_report, REPORT_CSV, REPORT_JSON, REPORT_MD};
use paramfuzz::runner::RunOptions;
use serde_json::Value;

pub const SEED: u64 = 7;

pub const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/mock_campaign");

pub fn fixture(name: &str) -> Vec<u8> {
    fs::read(Path::new(FIXTURE).join(name)).unwrap()
}

pub fn expected() -> Value {
    serde_json::from_slice(&fixture("expected.json")).unwrap()
}

pub fn cases() -> Vec<TestCase> {
    filter_cases(parse_corpus(&fixture("corpus.json")).unwrap())
}

/// Runs, classifies and reports the mock campaign into `out`.
pub fn run_all(out: &Path, workers: usize) -> CampaignResult {
    let cases = cases();
    let driver = ReplayDriver::new(parse_scripts(&fixture("scripts.json")).unwrap(), &cases).unwrap();
    let config = config(out, SEED, workers);
    let summary = run_campaign(&config, &cases, &corpus_hash(&fixture("corpus.json")), &driver).unwrap();
    assert!(summary.failed.is_empty());
    classify_log(&config.log_path(), &cases).unwrap();
    let result = collect_results(&read_log(&config.log_path()).unwrap()).unwrap();
    emit_report(&result, out).unwrap();
    result
}

pub fn config(out: &Path, seed: u64, workers: usize) -> CampaignConfig {
    CampaignConfig {
        operators: Operator::ALL.to_vec(),
        seed,
        out: out.to_path_buf(),
        workers,
        run: RunOptions::default(),
    }
}

/// Trajectory count, failure rates, Rouge-L rows and the transfer matrix
/// of a finished run in `dir` against the hand count.
pub fn assert_hand_count(dir: &Path, result: &CampaignResult) {
    let exp = expected();

    let log = read_log(&dir.join(LOG_FILE)).unwrap();
    let trajectories = log.iter().filter(|e| matches!(e, LogEvent::Trajectory(_))).count();
    assert_eq!(trajectories as u64, exp["trajectories"].as_u64().unwrap());
    assert_eq!(trajectories, 15 * 20);

    let all: Vec<_> = result.all_cases().cloned().collect();
    let overall = failure_rate(&all).unwrap();
    assert_eq!(overall.n_total - overall.n_pass, exp["fails"].as_u64().unwrap());
    assert_eq!(overall.percent(), exp["overall_failure_rate"]);

    for op in Operator::ALL {
        let e = &exp["operators"][op.id()];
        let r = result.operator(op).unwrap();
        assert!(r.skipped.is_empty(), "{op} skipped {:?}", r.skipped);
        let fr = failure_rate(&r.cases).unwrap();
        assert_eq!(fr.n_total, 20, "{op}");
        assert_eq!(fr.n_pass, e["n_pass"].as_u64().unwrap(), "{op}");
        assert_eq!(fr.percent(), e["failure_rate"], "{op}");
        let rates = category_rates(&r.cases).unwrap();
        let got: Vec<String> = rates.iter().map(|r| r.percent()).collect();
        let want: Vec<String> = serde_json::from_value(e["categories"].clone()).unwrap();
        assert_eq!(got, want, "{op} categories");
        let rouge = rouge_exceedance(r.cases.iter().flat_map(|c| &c.labels).map(|l| &l.label), ROUGE_THRESHOLD);
        let got = vec![rouge.joint.percent(), rouge.td.percent(), rouge.sm.percent()];
        let want: Vec<String> = serde_json::from_value(e["rouge"].clone()).unwrap();
        assert_eq!(got, want, "{op} rouge");
    }

    let matrix = transfer_matrix(result.all_cases().flat_map(|c| &c.labels).map(|l| &l.label));
    let want: [[u64; 5]; 5] = serde_json::from_value(exp["transfer_matrix"].clone()).unwrap();
    assert_eq!(matrix.counts, want);
}

/// Table shape of `report_table.csv` in `dir` and every cell against the
/// hand count.
pub fn assert_csv_cells(dir: &Path) {
    let exp = expected();
    let csv = fs::read_to_string(dir.join(REPORT_CSV)).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(
        rows[0],
        ["category", "RD", "RE", "WD", "SD", "CO", "WT", "RPF", "RPL", "CP", "AN", "FK", "AP", "CK", "UK", "CF"]
    );
    let titles: Vec<&str> = rows[1..].iter().map(|r| r[0]).collect();
    let mut want_titles: Vec<String> = serde_json::from_value(exp["categories"].clone()).unwrap();
    want_titles.extend(serde_json::from_value::<Vec<String>>(exp["rouge_rows"].clone()).unwrap());
    want_titles.push("Overall".into());
    assert_eq!(titles, want_titles);
    for (col, op) in Operator::ALL.iter().enumerate() {
        let e = &exp["operators"][op.id()];
        for cat in 0..5 {
            assert_eq!(rows[1 + cat][col + 1], e["categories"][cat], "{op} row {cat}");
        }
        for r in 0..3 {
            assert_eq!(rows[6 + r][col + 1], e["rouge"][r], "{op} rouge row {r}");
        }
        assert_eq!(rows[9][col + 1], e["failure_rate"], "{op} overall");
    }
    assert_eq!(Category::ALL.len(), 5);
}

/// Log and report files of two output directories are byte-identical.
pub fn assert_same_files(a: &Path, b: &Path) {
    for name in [LOG_FILE, REPORT_JSON, REPORT_CSV, REPORT_MD] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }
}
