//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! gating criterion fails. Set `PARAMFUZZ_LIVE_URL` (and optionally
//! `PARAMFUZZ_LIVE_MODEL`) to also run the non-gating live smoke check.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{mock, operator_props, rouge_oracle};
use paramfuzz::campaign::{
    classify_log, collect_results, corpus_hash, read_log, run_campaign, CampaignConfig, LogEvent, LOG_FILE,
};
use paramfuzz::classifier::{classify_trajectory, Category};
use paramfuzz::corpus::{filter_cases, parse_corpus, ToolReturn};
use paramfuzz::demo::{run_demo, DEMO_CORPUS, DEMO_SCRIPTS};
use paramfuzz::http::{EndpointConfig, HttpDriver};
use paramfuzz::operator::Operator;
use paramfuzz::replay::{parse_scripts, ReplayDriver};
use paramfuzz::report::{emit_report, REPORT_CSV, REPORT_JSON, REPORT_MD};
use paramfuzz::runner::{run_case, RunOptions, TruncationEvent};

/// Wall-clock budget for all operator property suites together.
const PROPERTY_BUDGET: Duration = Duration::from_secs(10);
const TRUNCATION_INPUT: usize = 5000;
const TRUNCATION_BUDGET: usize = 1024;

fn operator_properties() -> Result<String, String> {
    let start = Instant::now();
    for (ops, suite) in operator_props::SUITES {
        suite().map_err(|e| format!("{ops}: {e}"))?;
    }
    let elapsed = start.elapsed();
    let summary = format!(
        "{} suites x {} inputs in {:.2}s (budget {}s)",
        operator_props::SUITES.len(),
        operator_props::CASES,
        elapsed.as_secs_f64(),
        PROPERTY_BUDGET.as_secs()
    );
    if elapsed < PROPERTY_BUDGET {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn rouge_matches_oracle() -> Result<String, String> {
    rouge_oracle::assert_random_pairs();
    rouge_oracle::assert_worked_example();
    Ok(format!("{} random pairs bit-identical, worked example 4/7", rouge_oracle::ROUNDS))
}

fn demo_five_of_five() -> Result<String, String> {
    let report = run_demo()?;
    if !report.all_ok() {
        return Err(format!("{}/5 demo cases classified as intended", report.passed()));
    }
    // the evidence names the parameter each transcript gets wrong
    let cases = parse_corpus(DEMO_CORPUS.as_bytes()).unwrap();
    let driver = ReplayDriver::new(parse_scripts(DEMO_SCRIPTS.as_bytes()).unwrap(), &cases).unwrap();
    let want = [
        ("hallucination-name", Category::HallucinationName, "page_size"),
        ("specification-mismatch", Category::SpecificationMismatch, "region"),
        ("task-deviation", Category::TaskDeviation, "region"),
        ("missing-information", Category::MissingInformation, "country_id"),
        ("redundant-information", Category::RedundantInformation, "gl"),
    ];
    for (case_id, category, param) in want {
        let case = cases.iter().find(|c| c.case_id == case_id).unwrap();
        let traj = run_case(case, None, 0, &case.tools, &driver, &RunOptions::default()).unwrap();
        let c = classify_trajectory(&traj.invocations(), &case.oracle, &case.tools);
        let named = c
            .labels
            .iter()
            .flat_map(|l| l.label.evidence_for(category))
            .any(|e| e.param_name == param);
        if !named {
            return Err(format!("{case_id}: no {} evidence on `{param}`", category.title()));
        }
    }
    Ok("5/5 classified with evidence on the expected parameter".into())
}

fn mock_campaign() -> Result<String, String> {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let result = mock::run_all(a.path(), 4);
    mock::assert_hand_count(a.path(), &result);
    mock::assert_csv_cells(a.path());
    mock::run_all(b.path(), 1);
    mock::assert_same_files(a.path(), b.path());
    let exp = mock::expected();
    Ok(format!(
        "overall FR {}% ({} of 300 fail), CSV and transfer matrix match the hand count; rerun byte-identical",
        exp["overall_failure_rate"].as_str().unwrap(),
        exp["fails"]
    ))
}

fn trajectory_count(cases: usize) -> usize {
    let all = mock::cases();
    let chosen: Vec<_> = all.into_iter().take(cases).collect();
    let raw = mock::fixture("scripts.json");
    let driver = ReplayDriver::new(parse_scripts(&raw).unwrap(), &chosen).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let config: CampaignConfig = mock::config(dir.path(), mock::SEED, 4);
    run_campaign(&config, &chosen, &corpus_hash(&mock::fixture("corpus.json")), &driver).unwrap();
    read_log(&config.log_path())
        .unwrap()
        .iter()
        .filter(|e| matches!(e, LogEvent::Trajectory(_)))
        .count()
}

fn campaign_arithmetic() -> Result<String, String> {
    let mut seen = Vec::new();
    for c in [20, 7] {
        let n = trajectory_count(c);
        if n != Operator::ALL.len() * c {
            return Err(format!("C = {c}: {n} trajectories, want {}", Operator::ALL.len() * c));
        }
        seen.push(format!("C = {c} -> {n}"));
    }
    Ok(seen.join(", "))
}

fn truncation() -> Result<String, String> {
    let mut case = filter_cases(parse_corpus(DEMO_CORPUS.as_bytes()).unwrap())
        .into_iter()
        .find(|c| c.case_id == "task-deviation")
        .unwrap();
    let text: String = "日本語テキスト".chars().cycle().take(TRUNCATION_INPUT).collect();
    for r in &mut case.scripted_returns {
        r.tool_return = ToolReturn::Raw(text.clone());
    }
    let driver = ReplayDriver::new(parse_scripts(DEMO_SCRIPTS.as_bytes()).unwrap(), std::slice::from_ref(&case)).unwrap();
    let traj = run_case(&case, None, 0, &case.tools, &driver, &RunOptions::default()).unwrap();
    let shown = traj.steps[0].observation.chars().count();
    let event = TruncationEvent {
        step: 0,
        original_length: TRUNCATION_INPUT,
        truncated_length: TRUNCATION_BUDGET,
    };
    if shown == TRUNCATION_BUDGET && traj.truncations == [event] {
        Ok(format!("{TRUNCATION_INPUT} -> {shown} code points, event logged"))
    } else {
        Err(format!("observation has {shown} code points, events {:?}", traj.truncations))
    }
}

/// Five demo cases under two operators against a live endpoint.
fn live_smoke(url: &str) -> Result<String, String> {
    let model = std::env::var("PARAMFUZZ_LIVE_MODEL").unwrap_or_else(|_| "gpt-4o-mini".into());
    let cases = parse_corpus(DEMO_CORPUS.as_bytes()).map_err(|e| e.to_string())?;
    let driver = HttpDriver::new(EndpointConfig::new(url, model));
    let dir = tempfile::tempdir().unwrap();
    let config = CampaignConfig {
        operators: vec![Operator::RD, Operator::FK],
        seed: 1,
        out: dir.path().to_path_buf(),
        workers: 2,
        run: RunOptions::default(),
    };
    let summary = run_campaign(&config, &cases, &corpus_hash(DEMO_CORPUS.as_bytes()), &driver).map_err(|e| e.to_string())?;
    if !summary.failed.is_empty() {
        return Err(format!("{} trajectories failed: {:?}", summary.failed.len(), summary.failed[0]));
    }
    classify_log(&config.log_path(), &cases).map_err(|e| e.to_string())?;
    let result = collect_results(&read_log(&config.log_path()).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    emit_report(&result, dir.path()).map_err(|e| e.to_string())?;
    for name in [LOG_FILE, REPORT_JSON, REPORT_CSV, REPORT_MD] {
        if !dir.path().join(name).is_file() {
            return Err(format!("{name} missing"));
        }
    }
    Ok(format!("{} trajectories logged and reported", summary.written))
}

/// A criterion reports a one-line detail either way.
type Criterion = fn() -> Result<String, String>;

fn check(name: &str, f: impl FnOnce() -> Result<String, String>) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    match outcome {
        Ok(detail) => {
            println!("PASS {name}: {detail}");
            true
        }
        Err(detail) => {
            println!("FAIL {name}: {detail}");
            false
        }
    }
}

fn main() -> ExitCode {
    let gating: [(&str, Criterion); 6] = [
        ("operator property suites", operator_properties),
        ("rouge-l equals LCS oracle", rouge_matches_oracle),
        ("five-fixture demo", demo_five_of_five),
        ("mock campaign reproduction", mock_campaign),
        ("campaign arithmetic 15 x C", campaign_arithmetic),
        ("observation truncation", truncation),
    ];
    let mut failed = 0;
    for (name, f) in gating {
        if !check(name, f) {
            failed += 1;
        }
    }
    match std::env::var("PARAMFUZZ_LIVE_URL") {
        Ok(url) => {
            // directional only; never affects the exit code
            check("live smoke (non-gating)", || live_smoke(&url));
        }
        Err(_) => println!("SKIP live smoke (non-gating): PARAMFUZZ_LIVE_URL not set"),
    }
    println!("acceptance: {}/{} gating criteria passed", gating.len() - failed, gating.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
