mod settings;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use paramfuzz::campaign::{
    classify_log, collect_results, corpus_hash, donor_pool, read_log, run_campaign, CampaignConfig, DriverKind,
    LOG_FILE,
};
use paramfuzz::corpus::{filter_cases, lint_case, parse_corpus, TestCase};
use paramfuzz::demo::run_demo;
use paramfuzz::driver::AgentDriver;
use paramfuzz::http::{ChatRewriter, HttpDriver};
use paramfuzz::operator::{derive_seed, Operator, Source};
use paramfuzz::perturb_query::{self, RewriterKind};
use paramfuzz::perturb_return;
use paramfuzz::replay::{parse_scripts, ReplayDriver};
use paramfuzz::report::emit_report;
use paramfuzz::runner::{prepare_inputs, skip_record, RunOptions};
use serde_json::{json, Value};
use settings::{CampaignArgs, Settings};

const EXIT_VALIDATION: u8 = 1;
const EXIT_CAMPAIGN: u8 = 2;
const EXIT_DEMO: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "paramfuzz", version, about = "Parameter robustness fuzzing for tool-calling agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and lint a corpus; findings go to standard error.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Apply one operator to one case and print the result as JSON.
    Perturb {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        operator: Operator,
        #[arg(long = "case")]
        case_id: String,
        /// Campaign seed; the case seed is derived from it as in a campaign.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run (or resume) a campaign, appending trajectories to the log.
    Run(CampaignArgs),
    /// Label every unlabeled trajectory in a log.
    Classify {
        #[command(flatten)]
        log: LogArgs,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Write report.json, report_table.csv and report.md from a log.
    Report {
        #[command(flatten)]
        log: LogArgs,
        /// Directory for the report files; defaults to the log's directory.
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
    /// Classify the five shipped transcripts, one per failure category.
    Demo,
    /// Run, classify and report in one go.
    Campaign(CampaignArgs),
}

#[derive(Debug, clap::Args)]
struct LogArgs {
    /// Trajectory log; defaults to `<out>/trajectories.jsonl`.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl LogArgs {
    fn path(&self) -> PathBuf {
        self.log.clone().unwrap_or_else(|| self.out.join(LOG_FILE))
    }
}

/// A failed command with its exit status.
struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8) -> impl Fn(String) -> Failure {
    move |message| Failure { code, message }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { corpus } => cmd_validate(&corpus),
        Command::Perturb {
            corpus,
            operator,
            case_id,
            seed,
        } => cmd_perturb(&corpus, operator, &case_id, seed),
        Command::Run(args) => resolve(&args).and_then(|s| cmd_run(&s)),
        Command::Classify { log, corpus } => cmd_classify(&log.path(), &corpus),
        Command::Report { log, report_dir } => {
            let path = log.path();
            let dir = report_dir.unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
            cmd_report(&path, &dir)
        }
        Command::Demo => cmd_demo(),
        Command::Campaign(args) => resolve(&args).and_then(|s| {
            cmd_run(&s)?;
            let log = s.out.join(LOG_FILE);
            cmd_classify(&log, &s.corpus)?;
            cmd_report(&log, &s.out)
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn resolve(args: &CampaignArgs) -> Result<Settings, Failure> {
    args.resolve().map_err(fail(EXIT_CAMPAIGN))
}

/// Corpus bytes and every parsed case.
fn read_corpus(path: &Path) -> Result<(Vec<u8>, Vec<TestCase>), Failure> {
    let raw = fs::read(path).map_err(|e| fail(EXIT_VALIDATION)(format!("{}: {e}", path.display())))?;
    let cases = parse_corpus(&raw).map_err(|e| fail(EXIT_VALIDATION)(format!("{}: {e}", path.display())))?;
    Ok((raw, cases))
}

/// Corpus bytes and the cases that survive filtering.
fn load_corpus(path: &Path) -> Result<(Vec<u8>, Vec<TestCase>), Failure> {
    let (raw, cases) = read_corpus(path)?;
    Ok((raw, filter_cases(cases)))
}

fn cmd_validate(path: &Path) -> CmdResult {
    let (_, all) = read_corpus(path)?;
    let usable = filter_cases(all.clone());
    let mut findings = 0;
    for case in &all {
        for finding in lint_case(case) {
            eprintln!("{}: {finding}", case.case_id);
            findings += 1;
        }
    }
    println!(
        "{}: {} cases, {} usable after filtering, {} lint findings",
        path.display(),
        all.len(),
        usable.len(),
        findings
    );
    if findings > 0 {
        return Err(fail(EXIT_VALIDATION)(format!("{findings} lint findings")));
    }
    Ok(())
}

fn print_json(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON output"));
}

fn cmd_perturb(path: &Path, op: Operator, case_id: &str, campaign_seed: u64) -> CmdResult {
    let (_, cases) = read_corpus(path)?;
    let case = cases
        .iter()
        .find(|c| c.case_id == case_id)
        .ok_or_else(|| fail(EXIT_VALIDATION)(format!("no case `{case_id}` in {}", path.display())))?;
    let seed = derive_seed(campaign_seed, op, case_id);
    let opts = RunOptions::default();
    let (artifact, records, skipped) = match op.source() {
        // donors come from the filtered corpus, as in a campaign
        Source::ToolDocument => match prepare_inputs(case, Some(op), seed, &donor_pool(&filter_cases(cases.clone())), &opts) {
            Ok(p) => (json!({ "tools": p.tools }), p.records, None),
            Err((reason, records)) => (Value::Null, records, Some(reason)),
        },
        Source::UserQuery => match perturb_query::apply(&case.query, op, seed, None) {
            Ok((query, record)) => (json!({ "query": query }), vec![record], None),
            Err(e) => (Value::Null, vec![skip_record(op, seed, "query", e.to_string())], Some(e.to_string())),
        },
        Source::ToolReturn => {
            let target = "scripted_returns[0]";
            match case.scripted_returns.first() {
                None => (Value::Null, Vec::new(), Some("case has no scripted returns".to_string())),
                Some(first) => match perturb_return::apply(&first.tool_return, op, seed, target, &opts.return_options) {
                    Ok((ret, record)) => (
                        json!({"tool_name": first.tool_name, "arguments": first.arguments, "return": ret}),
                        vec![record],
                        None,
                    ),
                    Err(e) => (Value::Null, vec![skip_record(op, seed, target, e.to_string())], Some(e.to_string())),
                },
            }
        }
    };
    if let Some(reason) = &skipped {
        eprintln!("skipped: {reason}");
    }
    print_json(&json!({
        "case_id": case_id,
        "operator": op,
        "seed": seed,
        "skipped": skipped,
        "artifact": artifact,
        "records": records,
    }));
    Ok(())
}

fn build_driver(s: &Settings, cases: &[TestCase], opts: &mut RunOptions) -> Result<Box<dyn AgentDriver>, Failure> {
    match s.driver {
        DriverKind::Replay => {
            let scripts = match &s.scripts {
                Some(path) => {
                    let raw = fs::read(path).map_err(|e| fail(EXIT_CAMPAIGN)(format!("{}: {e}", path.display())))?;
                    parse_scripts(&raw).map_err(|e| fail(EXIT_CAMPAIGN)(format!("{}: {e}", path.display())))?
                }
                None => Vec::new(),
            };
            let driver = ReplayDriver::new(scripts, cases).map_err(|e| fail(EXIT_CAMPAIGN)(e.to_string()))?;
            Ok(Box::new(driver))
        }
        DriverKind::Http => {
            let endpoint = s.endpoint.clone().expect("resolved settings carry an endpoint");
            opts.complicator = Some(Arc::new(ChatRewriter::new(endpoint.clone(), RewriterKind::Complicate)));
            opts.noise = Some(Arc::new(ChatRewriter::new(endpoint.clone(), RewriterKind::Noise)));
            Ok(Box::new(HttpDriver::new(endpoint)))
        }
    }
}

fn cmd_run(s: &Settings) -> CmdResult {
    let (raw, cases) = load_corpus(&s.corpus)?;
    let mut run = RunOptions {
        step_limit: s.step_limit,
        max_observation_length: s.max_observation_length,
        ..RunOptions::default()
    };
    let driver = build_driver(s, &cases, &mut run)?;
    let config = CampaignConfig {
        operators: s.operators.clone(),
        seed: s.seed,
        out: s.out.clone(),
        workers: s.workers,
        run,
    };
    let summary = run_campaign(&config, &cases, &corpus_hash(&raw), driver.as_ref())
        .map_err(|e| fail(EXIT_CAMPAIGN)(e.to_string()))?;
    println!(
        "{}: {} trajectories written, {} already present ({} cases x {} operators)",
        config.log_path().display(),
        summary.written,
        summary.resumed,
        cases.len(),
        config.operators.len()
    );
    if !summary.failed.is_empty() {
        for (op, case_id, err) in &summary.failed {
            eprintln!("{op} {case_id}: {err}");
        }
        return Err(fail(EXIT_CAMPAIGN)(format!(
            "{} runs failed in the driver; rerun to retry them",
            summary.failed.len()
        )));
    }
    Ok(())
}

fn cmd_classify(log: &Path, corpus: &Path) -> CmdResult {
    let (_, cases) = load_corpus(corpus)?;
    let summary = classify_log(log, &cases).map_err(|e| fail(EXIT_CAMPAIGN)(e.to_string()))?;
    println!(
        "{}: {} trajectories labeled, {} already labeled",
        log.display(),
        summary.labeled,
        summary.already_labeled
    );
    Ok(())
}

fn cmd_report(log: &Path, dir: &Path) -> CmdResult {
    let events = read_log(log).map_err(|e| fail(EXIT_CAMPAIGN)(e.to_string()))?;
    let result = collect_results(&events).map_err(|e| fail(EXIT_CAMPAIGN)(e.to_string()))?;
    let written =
        emit_report(&result, dir).map_err(|e| fail(EXIT_CAMPAIGN)(format!("{}: {e}", dir.display())))?;
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_demo() -> CmdResult {
    let report = run_demo().map_err(fail(EXIT_DEMO))?;
    for e in &report.entries {
        let observed: Vec<&str> = e.observed.iter().map(|c| c.title()).collect();
        println!(
            "{} {:<24} expected {:<24} observed [{}], {} evidence",
            if e.ok() { "ok  " } else { "FAIL" },
            e.case_id,
            e.expected.title(),
            observed.join(", "),
            e.evidence
        );
    }
    println!("demo: {}/{} classified as intended", report.passed(), report.entries.len());
    if report.all_ok() {
        Ok(())
    } else {
        Err(fail(EXIT_DEMO)("demo classification mismatch".into()))
    }
}
