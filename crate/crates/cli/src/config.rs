//! Simulation configuration: JSON file with flat keys, overridden by flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use causal_dr_core::data::Scenario;
use causal_dr_core::estimators::{Method, ResamplingConfig};
use causal_dr_core::simulation::{Dgp, ReplicationRow, SimConfig};

use crate::CliError;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON file with keys n, reps, seed, scenario, estimators, draws, boot,
    /// threads, out (and optionally dgp, stabilize).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// I or II.
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated estimator tags, `or_ps` for both OR/PS rows, or `all`.
    #[arg(long)]
    estimators: Option<String>,
    /// Posterior draws M.
    #[arg(long)]
    draws: Option<usize>,
    /// Bootstrap resamples B.
    #[arg(long)]
    boot: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `standard` or `exchanged` (x3 and x4 swapped between the mechanisms).
    #[arg(long)]
    dgp: Option<String>,
    /// Unit numerators in the inverse-probability weights.
    #[arg(long)]
    no_stabilize: bool,
}

/// Estimator list in a config file: a comma-separated string or an array.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum EstimatorList {
    Joined(String),
    List(Vec<String>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    n: Option<usize>,
    reps: Option<usize>,
    seed: Option<u64>,
    scenario: Option<String>,
    estimators: Option<EstimatorList>,
    draws: Option<usize>,
    boot: Option<usize>,
    threads: Option<usize>,
    out: Option<PathBuf>,
    dgp: Option<String>,
    stabilize: Option<bool>,
}

impl SimulateArgs {
    pub fn resolve(self) -> Result<(SimConfig, PathBuf), CliError> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str::<FileConfig>(&text)
                    .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let defaults = SimConfig::default();
        let scenario: Scenario = match self.scenario.or(file.scenario) {
            Some(s) => s.parse()?,
            None => defaults.scenario,
        };
        let dgp: Dgp = match self.dgp.or(file.dgp) {
            Some(s) => s.parse()?,
            None => defaults.dgp,
        };
        let methods = match (self.estimators, file.estimators) {
            (Some(s), _) | (None, Some(EstimatorList::Joined(s))) => Method::parse_list(&s)?,
            (None, Some(EstimatorList::List(v))) => Method::parse_list(&v.join(","))?,
            (None, None) => defaults.methods,
        };
        let stabilize = if self.no_stabilize {
            false
        } else {
            file.stabilize.unwrap_or(true)
        };
        let config = SimConfig {
            n: self.n.or(file.n).unwrap_or(defaults.n),
            reps: self.reps.or(file.reps).unwrap_or(defaults.reps),
            seed: self.seed.or(file.seed).unwrap_or(defaults.seed),
            scenario,
            dgp,
            methods,
            resampling: ResamplingConfig {
                n_draws: self.draws.or(file.draws).unwrap_or(defaults.resampling.n_draws),
                n_boot: self.boot.or(file.boot).unwrap_or(defaults.resampling.n_boot),
                stabilize,
            },
            threads: self.threads.or(file.threads).unwrap_or(defaults.threads),
        };
        let out = self.out.or(file.out).unwrap_or_else(|| PathBuf::from("results"));
        Ok((config, out))
    }
}

/// Sidecar written next to the CSV outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub version: String,
    pub config: SimConfig,
    pub seed: u64,
    pub batch_count_rule: &'static str,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub failures: BTreeMap<String, usize>,
    pub failure_messages: BTreeMap<String, Vec<String>>,
}

impl Manifest {
    pub fn new(config: &SimConfig, rows: &[ReplicationRow], started_unix: u64, wall_clock_seconds: f64) -> Self {
        let mut failures: BTreeMap<String, usize> = config.methods.iter().map(|m| (m.tag().to_string(), 0)).collect();
        let mut failure_messages: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for r in rows {
            if let Some(err) = &r.error {
                *failures.entry(r.method.tag().to_string()).or_default() += 1;
                let msgs = failure_messages.entry(r.method.tag().to_string()).or_default();
                if msgs.len() < 10 {
                    msgs.push(format!("rep {}: {err}", r.rep));
                }
            }
        }
        Self {
            version: format!("causal-dr {}", env!("CARGO_PKG_VERSION")),
            config: config.clone(),
            seed: config.seed,
            batch_count_rule: "floor(sqrt(successful replications))",
            started_unix,
            wall_clock_seconds,
            failures,
            failure_messages,
        }
    }
}
