//! The simulation study: data-generating process, scenarios, replication
//! loop and summary metrics.
//!
//! For each unit, `x_j ~ N(0, 1)` (j = 1..4), `c_j = |x_j| / sqrt(1 - 2/π)`,
//!
//! ```text
//! Z | x ~ Bernoulli(expit(0.4 c₁ + 0.4 x₂ + 0.8 x₄))
//! Y | z, x ~ N(z - c₁ - x₂ - x₃, 1)
//! ```
//!
//! so the true marginal contrast is 1. With this assignment the treatment
//! covariates `b = (c₁, x₂, x₄)` of scenario I are exactly those of the
//! treatment mechanism and the outcome covariates `s = (c₁, x₂, x₃)` of
//! scenario II exactly those of the outcome mechanism. The variant with
//! `x₃` and `x₄` exchanged between the two mechanisms is available as
//! [`Dgp::Exchanged`]; under it `x₃` is an instrument that `s` adjusts for.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{half_normal_sd, CovariateSpec, CovariateTerm, Dataset, Scenario};
use crate::error::{Error, Result};
use crate::estimators::{estimate_many, Method, ResamplingConfig, MAX_FAILURE_FRACTION};
use crate::numerics::{batch_means_error, default_batch_count, expit, mean, sample_sd, standard_normal, Matrix, RngStream};

pub const TRUE_EFFECT: f64 = 1.0;
pub const COVARIATE_NAMES: [&str; 4] = ["x1", "x2", "x3", "x4"];

/// Which of `x₃`, `x₄` enters the treatment mechanism (the other enters the
/// outcome mechanism).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dgp {
    /// Treatment on `(c₁, x₂, x₄)`, outcome on `(c₁, x₂, x₃)`.
    #[default]
    Standard,
    /// Treatment on `(c₁, x₂, x₃)`, outcome on `(c₁, x₂, x₄)`.
    Exchanged,
}

impl std::str::FromStr for Dgp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "standard" => Ok(Dgp::Standard),
            "exchanged" => Ok(Dgp::Exchanged),
            other => Err(Error::InvalidArgument(format!(
                "unknown data-generating process `{other}` (expected standard or exchanged)"
            ))),
        }
    }
}

/// One sample of size `n` from the generator of `rng`.
pub fn generate_data(n: usize, rng: &RngStream) -> Result<Dataset> {
    generate_data_with(n, Dgp::Standard, rng)
}

pub fn generate_data_with(n: usize, dgp: Dgp, rng: &RngStream) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    let mut gen = rng.generator();
    let sd = half_normal_sd();
    let mut x = Vec::with_capacity(4 * n);
    let mut z = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: [f64; 4] = std::array::from_fn(|_| standard_normal(&mut gen));
        let c1 = xi[0].abs() / sd;
        let (ps_only, outcome_only) = match dgp {
            Dgp::Standard => (xi[3], xi[2]),
            Dgp::Exchanged => (xi[2], xi[3]),
        };
        let zi = if gen.random::<f64>() < expit(0.4 * c1 + 0.4 * xi[1] + 0.8 * ps_only) {
            1.0
        } else {
            0.0
        };
        y.push(zi - c1 - xi[1] - outcome_only + standard_normal(&mut gen));
        z.push(zi);
        x.extend_from_slice(&xi);
    }
    Dataset::new(
        y,
        z,
        Matrix::from_row_major(n, 4, x)?,
        COVARIATE_NAMES.iter().map(|s| s.to_string()).collect(),
    )
}

/// Scenario I: `s = (x₁, x₂, x₃)`, `b = (c₁, x₂, x₄)`.
/// Scenario II: `s = (c₁, x₂, x₃)`, `b = (x₁, x₂, x₄)`.
pub fn apply_scenario(data: &Dataset, scenario: Scenario) -> Result<CovariateSpec> {
    let col = |name: &str| {
        data.column_index(name)
            .ok_or_else(|| Error::Data(format!("dataset has no column `{name}`")))
    };
    let (x1, x2, x3, x4) = (col("x1")?, col("x2")?, col("x3")?, col("x4")?);
    let id = CovariateTerm::identity;
    let abs = CovariateTerm::abs_standardized;
    let spec = match scenario {
        Scenario::I => CovariateSpec::new(vec![id(x1), id(x2), id(x3)], vec![abs(x1), id(x2), id(x4)]),
        Scenario::II => CovariateSpec::new(vec![abs(x1), id(x2), id(x3)], vec![id(x1), id(x2), id(x4)]),
    };
    spec.validate(data)?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub scenario: Scenario,
    #[serde(default)]
    pub dgp: Dgp,
    pub methods: Vec<Method>,
    pub resampling: ResamplingConfig,
    pub threads: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 500,
            reps: 1000,
            seed: 42,
            scenario: Scenario::I,
            dgp: Dgp::Standard,
            methods: Method::ALL.to_vec(),
            resampling: ResamplingConfig::default(),
            threads: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 50 {
            return Err(Error::InvalidArgument(format!("n must be at least 50 (got {})", self.n)));
        }
        if self.reps < 2 {
            return Err(Error::InvalidArgument(format!("reps must be at least 2 (got {})", self.reps)));
        }
        if self.threads == 0 {
            return Err(Error::InvalidArgument("threads must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no estimators selected".into()));
        }
        self.resampling.validate()
    }
}

/// One estimator's outcome in one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRow {
    pub rep: usize,
    pub method: Method,
    pub point: f64,
    pub se: f64,
    pub covered: bool,
    /// Set when the estimator failed; `point` and `se` are then NaN.
    pub error: Option<String>,
}

/// Replication `rep` draws its data from stream `(seed, rep)` and passes the
/// same stream to the estimators, which derive their own sub-streams.
pub fn run_replication(config: &SimConfig, rep: usize) -> Result<Vec<ReplicationRow>> {
    let stream = RngStream::new(config.seed, rep as u64);
    let data = generate_data_with(config.n, config.dgp, &stream)?;
    let spec = apply_scenario(&data, config.scenario)?;
    Ok(estimate_many(&config.methods, &data, &spec, &config.resampling, &stream)
        .into_iter()
        .map(|(method, r)| match r {
            Ok(est) => ReplicationRow {
                rep,
                method,
                point: est.point,
                se: est.se,
                covered: est.covers(TRUE_EFFECT),
                error: None,
            },
            Err(e) => ReplicationRow {
                rep,
                method,
                point: f64::NAN,
                se: f64::NAN,
                covered: false,
                error: Some(e.to_string()),
            },
        })
        .collect())
}

/// All replications on a pool of `config.threads` workers, returned in
/// replication order.
pub fn run_simulation(config: &SimConfig) -> Result<Vec<ReplicationRow>> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
    let per_rep: Vec<Result<Vec<ReplicationRow>>> =
        pool.install(|| (0..config.reps).into_par_iter().map(|r| run_replication(config, r)).collect());
    let mut rows = Vec::with_capacity(config.reps * config.methods.len());
    for r in per_rep {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Summary metrics for one estimator over all replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationRow {
    pub estimator: Method,
    pub mean_point: f64,
    pub rel_bias_pct: f64,
    pub mc_sd: f64,
    pub mean_se: f64,
    /// Batch-means standard error of `mean_point`.
    pub mc_error: f64,
    pub coverage_pct: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    /// More than 10% of replications failed.
    pub incomplete: bool,
}

/// One row per estimator, in the order of first appearance. Failed
/// replications are excluded per estimator and counted.
pub fn summarize(rows: &[ReplicationRow]) -> Vec<SimulationRow> {
    let mut methods: Vec<Method> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let mine: Vec<&ReplicationRow> = rows.iter().filter(|r| r.method == m).collect();
            let ok: Vec<&&ReplicationRow> = mine.iter().filter(|r| r.error.is_none()).collect();
            let points: Vec<f64> = ok.iter().map(|r| r.point).collect();
            let ses: Vec<f64> = ok.iter().map(|r| r.se).collect();
            let covered = ok.iter().filter(|r| r.covered).count();
            let n_failed = mine.len() - ok.len();
            let mean_point = if points.is_empty() { f64::NAN } else { mean(&points) };
            let mc_error = batch_means_error(&points, default_batch_count(points.len())).unwrap_or(f64::NAN);
            SimulationRow {
                estimator: m,
                mean_point,
                rel_bias_pct: 100.0 * (mean_point - TRUE_EFFECT) / TRUE_EFFECT,
                mc_sd: if points.len() > 1 { sample_sd(&points) } else { f64::NAN },
                mean_se: if ses.is_empty() { f64::NAN } else { mean(&ses) },
                mc_error,
                coverage_pct: if ok.is_empty() {
                    f64::NAN
                } else {
                    100.0 * covered as f64 / ok.len() as f64
                },
                n_ok: ok.len(),
                n_failed,
                incomplete: n_failed as f64 > MAX_FAILURE_FRACTION * mine.len() as f64,
            }
        })
        .collect()
}
