//! Campaign settings: command-line flags over a config file over defaults.

use std::path::PathBuf;

use clap::Args;
use paramfuzz::campaign::{ConfigFile, DriverKind};
use paramfuzz::driver::{DEFAULT_MAX_OBSERVATION_LENGTH, DEFAULT_STEP_LIMIT};
use paramfuzz::http::EndpointConfig;
use paramfuzz::operator::Operator;

const DEFAULT_OUT: &str = "out";
const DEFAULT_WORKERS: usize = 4;

#[derive(Debug, Clone, Default, Args)]
pub struct CampaignArgs {
    /// JSON or TOML file with defaults for any of the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Test-case corpus (JSON).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Comma-separated operator ids, e.g. `RD,CF`; all fifteen when omitted.
    #[arg(long, value_parser = parse_operators)]
    pub operators: Option<OperatorList>,
    #[arg(long, value_enum)]
    pub driver: Option<DriverArg>,
    /// Campaign seed; every per-case seed is derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for the log and reports.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub step_limit: Option<usize>,
    /// Observation budget in code points.
    #[arg(long)]
    pub max_obs_len: Option<usize>,
    /// Scripted behaviors for the replay driver.
    #[arg(long)]
    pub scripts: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DriverArg {
    Replay,
    Http,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorList(pub Vec<Operator>);

fn parse_operators(list: &str) -> Result<OperatorList, String> {
    Operator::parse_list(list).map(OperatorList).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub corpus: PathBuf,
    pub operators: Vec<Operator>,
    pub driver: DriverKind,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    pub step_limit: usize,
    pub max_observation_length: usize,
    pub scripts: Option<PathBuf>,
    pub endpoint: Option<EndpointConfig>,
}

impl CampaignArgs {
    pub fn resolve(&self) -> Result<Settings, String> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let corpus = self
            .corpus
            .clone()
            .or(file.corpus)
            .ok_or("no corpus given; pass --corpus or set `corpus` in the config file")?;
        let driver = match self.driver {
            Some(DriverArg::Replay) => DriverKind::Replay,
            Some(DriverArg::Http) => DriverKind::Http,
            None => file.driver.unwrap_or(DriverKind::Replay),
        };
        if driver == DriverKind::Http && file.endpoint.is_none() {
            return Err("the http driver needs an `endpoint` section in the config file".into());
        }
        let workers = self.workers.or(file.workers).unwrap_or(DEFAULT_WORKERS);
        if workers == 0 {
            return Err("--workers must be at least 1".into());
        }
        let mut operators = self.operators.clone().map(|l| l.0).or(file.operators).unwrap_or_else(|| Operator::ALL.to_vec());
        operators.sort_by_key(|op| Operator::ALL.iter().position(|o| o == op));
        operators.dedup();
        Ok(Settings {
            corpus,
            operators,
            driver,
            seed: self.seed.or(file.seed).unwrap_or(0),
            out: self.out.clone().or(file.out).unwrap_or_else(|| DEFAULT_OUT.into()),
            workers,
            step_limit: self.step_limit.or(file.step_limit).unwrap_or(DEFAULT_STEP_LIMIT),
            max_observation_length: self
                .max_obs_len
                .or(file.max_observation_length)
                .unwrap_or(DEFAULT_MAX_OBSERVATION_LENGTH),
            scripts: self.scripts.clone().or(file.scripts),
            endpoint: file.endpoint,
        })
    }
}
