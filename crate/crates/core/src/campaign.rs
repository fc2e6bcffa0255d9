//! Campaign execution over a JSON-lines log.
//!
//! The log starts with one header event, then one trajectory event per
//! (operator, case) in job order, then label events appended by the
//! classification pass. Workers run cases concurrently; a single writer
//! emits results in job order, so the log does not depend on scheduling.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::{classify_trajectory, TrajectoryClassification, CLASSIFIER_VERSION};
use crate::corpus::{TestCase, ToolDocument};
use crate::driver::{AgentDriver, DriverError, TEMPLATE_VERSION};
use crate::http::EndpointConfig;
use crate::metrics::{CaseResult, OperatorResults, SkippedCase};
use crate::operator::{derive_seed, Operator};
use crate::runner::{run_case, Outcome, RunOptions, Trajectory};

pub const LOG_FILE: &str = "trajectories.jsonl";
pub const LOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("log line {line}: {message}")]
    CorruptLog { line: usize, message: String },
    #[error("log has no header event")]
    MissingHeader,
    #[error("existing log was written by a different campaign ({0} differs)")]
    HeaderMismatch(&'static str),
    #[error("log refers to case `{0}`, which the corpus does not contain")]
    UnknownCase(String),
    #[error("{0} trajectories have no label; run classification first")]
    Unlabeled(usize),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriverKind {
    Replay,
    Http,
}

/// Campaign settings as written in a config file. Every field is optional;
/// command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub corpus: Option<PathBuf>,
    pub operators: Option<Vec<Operator>>,
    pub driver: Option<DriverKind>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    #[serde(alias = "max_steps")]
    pub step_limit: Option<usize>,
    #[serde(alias = "max_obs_len")]
    pub max_observation_length: Option<usize>,
    pub scripts: Option<PathBuf>,
    pub endpoint: Option<EndpointConfig>,
}

impl ConfigFile {
    /// Reads TOML when the file name ends in `.toml`, JSON otherwise.
    pub fn load(path: &Path) -> Result<Self, String> {
        let raw = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let parsed = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&raw).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&raw).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[derive(Clone)]
pub struct CampaignConfig {
    pub operators: Vec<Operator>,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    pub run: RunOptions,
}

impl CampaignConfig {
    pub fn log_path(&self) -> PathBuf {
        self.out.join(LOG_FILE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignHeader {
    pub schema_version: u32,
    pub corpus_hash: String,
    pub template_version: String,
    pub driver_id: String,
    pub seed: u64,
    pub operators: Vec<Operator>,
    pub step_limit: usize,
    pub max_observation_length: usize,
    pub cases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEvent {
    pub classifier_version: String,
    pub operator: Option<Operator>,
    pub case_id: String,
    pub seed: u64,
    pub classification: TrajectoryClassification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Header(CampaignHeader),
    Trajectory(Trajectory),
    Label(LabelEvent),
}

type RunKey = (Option<Operator>, String, u64);

fn trajectory_key(t: &Trajectory) -> RunKey {
    (t.operator, t.case_id.clone(), t.seed)
}

/// SHA-256 of the corpus bytes, hex encoded.
pub fn corpus_hash(raw: &[u8]) -> String {
    hex::encode(Sha256::digest(raw))
}

/// Every tool document in the corpus, each name once. WD draws from this.
pub fn donor_pool(cases: &[TestCase]) -> Vec<ToolDocument> {
    let mut seen = HashSet::new();
    cases
        .iter()
        .flat_map(|c| &c.tools)
        .filter(|t| seen.insert(t.tool_name.clone()))
        .cloned()
        .collect()
}

pub fn read_log(path: &Path) -> Result<Vec<LogEvent>, CampaignError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| CampaignError::CorruptLog {
            line: i + 1,
            message: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

fn append_event(out: &mut impl Write, event: &LogEvent) -> io::Result<()> {
    let mut line = serde_json::to_string(event).expect("log events serialize");
    line.push('\n');
    out.write_all(line.as_bytes())?;
    out.flush()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub written: usize,
    /// Jobs already present in the log from an earlier run.
    pub resumed: usize,
    /// Jobs that failed in the driver; not logged, retried on the next run.
    pub failed: Vec<(Operator, String, DriverError)>,
}

/// Runs every (operator, case) job not yet in the log and appends the
/// trajectories.
pub fn run_campaign(
    config: &CampaignConfig,
    cases: &[TestCase],
    corpus_hash: &str,
    driver: &dyn AgentDriver,
) -> Result<RunSummary, CampaignError> {
    let header = CampaignHeader {
        schema_version: LOG_SCHEMA_VERSION,
        corpus_hash: corpus_hash.to_string(),
        template_version: TEMPLATE_VERSION.to_string(),
        driver_id: driver.id(),
        seed: config.seed,
        operators: config.operators.clone(),
        step_limit: config.run.step_limit,
        max_observation_length: config.run.max_observation_length,
        cases: cases.iter().map(|c| c.case_id.clone()).collect(),
    };
    fs::create_dir_all(&config.out).map_err(io_err(&config.out))?;
    let log_path = config.log_path();
    let mut done = HashSet::new();
    let fresh = !log_path.exists() || fs::metadata(&log_path).map_err(io_err(&log_path))?.len() == 0;
    if !fresh {
        let events = read_log(&log_path)?;
        match events.first() {
            Some(LogEvent::Header(existing)) => check_header(existing, &header)?,
            _ => return Err(CampaignError::MissingHeader),
        }
        for e in &events {
            if let LogEvent::Trajectory(t) = e {
                done.insert(trajectory_key(t));
            }
        }
    }
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(io_err(&log_path))?;
    if fresh {
        append_event(&mut log, &LogEvent::Header(header)).map_err(io_err(&log_path))?;
    }

    let mut summary = RunSummary::default();
    let mut jobs = Vec::new();
    for &op in &config.operators {
        for case in cases {
            let seed = derive_seed(config.seed, op, &case.case_id);
            if done.contains(&(Some(op), case.case_id.clone(), seed)) {
                summary.resumed += 1;
            } else {
                jobs.push((op, case, seed));
            }
        }
    }
    let donors = donor_pool(cases);
    let next = AtomicUsize::new(0);
    let workers = config.workers.clamp(1, jobs.len().max(1));
    let (tx, rx) = mpsc::channel();

    thread::scope(|scope| -> Result<(), CampaignError> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (jobs, next, donors) = (&jobs, &next, &donors);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(op, case, seed)) = jobs.get(i) else { break };
                let result = run_case(case, Some(op), seed, donors, driver, &config.run);
                if tx.send((i, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending = BTreeMap::new();
        let mut cursor = 0;
        for (i, result) in rx {
            pending.insert(i, result);
            while let Some(result) = pending.remove(&cursor) {
                let (op, case, _) = jobs[cursor];
                match result {
                    Ok(trajectory) => {
                        append_event(&mut log, &LogEvent::Trajectory(trajectory)).map_err(io_err(&log_path))?;
                        summary.written += 1;
                    }
                    Err(e) => {
                        log::warn!("{op} / {}: {e}", case.case_id);
                        summary.failed.push((op, case.case_id.clone(), e));
                    }
                }
                cursor += 1;
            }
        }
        Ok(())
    })?;
    Ok(summary)
}

fn check_header(existing: &CampaignHeader, current: &CampaignHeader) -> Result<(), CampaignError> {
    let checks: [(&'static str, bool); 6] = [
        ("corpus_hash", existing.corpus_hash == current.corpus_hash),
        ("template_version", existing.template_version == current.template_version),
        ("driver_id", existing.driver_id == current.driver_id),
        ("seed", existing.seed == current.seed),
        ("step_limit", existing.step_limit == current.step_limit),
        (
            "max_observation_length",
            existing.max_observation_length == current.max_observation_length,
        ),
    ];
    match checks.iter().find(|(_, same)| !same) {
        Some((field, _)) => Err(CampaignError::HeaderMismatch(field)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassifySummary {
    pub labeled: usize,
    pub already_labeled: usize,
}

/// Appends a label event for every attempted trajectory that lacks one
/// from the current classifier version.
pub fn classify_log(log_path: &Path, cases: &[TestCase]) -> Result<ClassifySummary, CampaignError> {
    let events = read_log(log_path)?;
    let by_id: HashMap<&str, &TestCase> = cases.iter().map(|c| (c.case_id.as_str(), c)).collect();
    let labeled: HashSet<RunKey> = events
        .iter()
        .filter_map(|e| match e {
            LogEvent::Label(l) if l.classifier_version == CLASSIFIER_VERSION => {
                Some((l.operator, l.case_id.clone(), l.seed))
            }
            _ => None,
        })
        .collect();
    let mut summary = ClassifySummary::default();
    let mut new_events = Vec::new();
    for e in &events {
        let LogEvent::Trajectory(t) = e else { continue };
        if t.is_skipped() {
            continue;
        }
        if labeled.contains(&trajectory_key(t)) {
            summary.already_labeled += 1;
            continue;
        }
        let case = by_id
            .get(t.case_id.as_str())
            .ok_or_else(|| CampaignError::UnknownCase(t.case_id.clone()))?;
        let classification = classify_trajectory(&t.invocations(), &case.oracle, &case.tools);
        new_events.push(LogEvent::Label(LabelEvent {
            classifier_version: CLASSIFIER_VERSION.to_string(),
            operator: t.operator,
            case_id: t.case_id.clone(),
            seed: t.seed,
            classification,
        }));
    }
    let mut log = OpenOptions::new()
        .append(true)
        .open(log_path)
        .map_err(io_err(log_path))?;
    for event in &new_events {
        append_event(&mut log, event).map_err(io_err(log_path))?;
    }
    summary.labeled = new_events.len();
    Ok(summary)
}

/// Results assembled from a labeled log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub header: CampaignHeader,
    /// One entry per campaign operator, in report column order.
    pub operators: Vec<OperatorResults>,
}

impl CampaignResult {
    pub fn operator(&self, op: Operator) -> Option<&OperatorResults> {
        self.operators.iter().find(|r| r.operator == op)
    }

    pub fn all_cases(&self) -> impl Iterator<Item = &CaseResult> {
        self.operators.iter().flat_map(|r| &r.cases)
    }
}

/// Joins trajectories with their latest labels. Unperturbed baseline
/// trajectories are not part of a campaign result.
pub fn collect_results(events: &[LogEvent]) -> Result<CampaignResult, CampaignError> {
    let Some(LogEvent::Header(header)) = events.first() else {
        return Err(CampaignError::MissingHeader);
    };
    let mut labels: HashMap<RunKey, &TrajectoryClassification> = HashMap::new();
    for e in events {
        if let LogEvent::Label(l) = e {
            labels.insert((l.operator, l.case_id.clone(), l.seed), &l.classification);
        }
    }
    let mut per_op: BTreeMap<usize, OperatorResults> = BTreeMap::new();
    let mut unlabeled = 0;
    for e in events {
        let LogEvent::Trajectory(t) = e else { continue };
        let Some(op) = t.operator else { continue };
        let slot = Operator::ALL.iter().position(|o| *o == op).expect("operator in ALL");
        let entry = per_op.entry(slot).or_insert_with(|| OperatorResults {
            operator: op,
            cases: Vec::new(),
            skipped: Vec::new(),
        });
        if let Outcome::Skipped { reason } = &t.outcome {
            entry.skipped.push(SkippedCase {
                case_id: t.case_id.clone(),
                reason: reason.clone(),
            });
            continue;
        }
        let Some(classification) = labels.get(&trajectory_key(t)) else {
            unlabeled += 1;
            continue;
        };
        entry.cases.push(CaseResult {
            case_id: t.case_id.clone(),
            seed: t.seed,
            outcome: t.outcome.clone(),
            labels: classification.labels.clone(),
            pass: classification.case_pass && t.outcome == Outcome::Completed,
        });
    }
    if unlabeled > 0 {
        return Err(CampaignError::Unlabeled(unlabeled));
    }
    for op in &header.operators {
        let slot = Operator::ALL.iter().position(|o| o == op).expect("operator in ALL");
        per_op.entry(slot).or_insert_with(|| OperatorResults {
            operator: *op,
            cases: Vec::new(),
            skipped: Vec::new(),
        });
    }
    Ok(CampaignResult {
        header: header.clone(),
        operators: per_op.into_values().collect(),
    })
}
