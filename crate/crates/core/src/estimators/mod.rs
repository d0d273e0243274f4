//! Estimators of the average causal contrast `E(Y₁) - E(Y₀)`.
//!
//! Every estimator takes the same inputs (data, covariate selection,
//! resampling configuration, random stream) and returns an
//! [`EstimateResult`]. Frequentist estimators report a full-sample point and
//! either an analytic or a nonparametric-bootstrap standard error; Bayesian
//! estimators report the mean and standard deviation of their draws.

mod bayes;
mod bootstrap;
mod frequentist;
mod joint;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{CovariateSpec, Dataset};
use crate::design::{clamp_propensity, propensity_design};
use crate::error::{Error, Result};
use crate::glm::{fit_logistic_weighted, propensity, DesignMatrix, FittedLogistic};
use crate::numerics::{mean, sample_sd, RngStream};

pub use bayes::{
    importance_sampling, importance_sampling_dr, two_step, ImportanceSampler, OutcomeWeighting, TwoStepResults,
};
pub use bootstrap::{bootstrap_se, BootstrapSummary};
pub use frequentist::{
    adjusted, clever_covariate_estimator, dr, dr_parts, dr_terms, ipt_weights, iptw, naive, or_iptw, or_ps,
    DrParts, DrTerms, OrPsFit,
};
pub use joint::joint_estimation;

pub(crate) use frequentist::{clever_point, dr_terms_signed, or_iptw_point};

/// Multiplier for the Wald intervals.
pub const WALD_Z: f64 = 1.96;
/// Resampling loops fail when more than this fraction of fits fail.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    Adjusted,
    Iptw,
    OrPsObserved,
    OrPsSandwich,
    Dr,
    CleverCovariate,
    OrIptw,
    TwoStepForward,
    TwoStepVarDecomp,
    Joint,
    ImportanceSampling,
    ImportanceSamplingDr,
}

impl Method {
    /// Table order.
    pub const ALL: [Method; 13] = [
        Method::Naive,
        Method::Adjusted,
        Method::Iptw,
        Method::OrPsObserved,
        Method::OrPsSandwich,
        Method::Dr,
        Method::CleverCovariate,
        Method::OrIptw,
        Method::TwoStepForward,
        Method::TwoStepVarDecomp,
        Method::Joint,
        Method::ImportanceSampling,
        Method::ImportanceSamplingDr,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Adjusted => "adjusted",
            Method::Iptw => "iptw",
            Method::OrPsObserved => "or_ps_obs",
            Method::OrPsSandwich => "or_ps_sandwich",
            Method::Dr => "dr",
            Method::CleverCovariate => "clever_covariate",
            Method::OrIptw => "or_iptw",
            Method::TwoStepForward => "two_step_forward",
            Method::TwoStepVarDecomp => "two_step_vardecomp",
            Method::Joint => "joint",
            Method::ImportanceSampling => "is",
            Method::ImportanceSamplingDr => "is_dr",
        }
    }

    /// Row label used in summary tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::Naive => "Naive",
            Method::Adjusted => "Adjusted",
            Method::Iptw => "IPTW",
            Method::OrPsObserved => "OR/PS (obs. information)",
            Method::OrPsSandwich => "OR/PS (adjusted sandwich)",
            Method::Dr => "DR",
            Method::CleverCovariate => "Clever covariate",
            Method::OrIptw => "OR/IPTW",
            Method::TwoStepForward => "Two-step (forward sampling)",
            Method::TwoStepVarDecomp => "Two-step (variance decomposition)",
            Method::Joint => "Joint estimation",
            Method::ImportanceSampling => "Importance sampling",
            Method::ImportanceSamplingDr => "Importance sampling/DR",
        }
    }

    /// Whether the result comes from posterior-style draws.
    pub fn is_bayesian(self) -> bool {
        matches!(
            self,
            Method::TwoStepForward
                | Method::TwoStepVarDecomp
                | Method::Joint
                | Method::ImportanceSampling
                | Method::ImportanceSamplingDr
        )
    }

    /// Key of the random sub-stream. The two two-step variants share their
    /// propensity draws, hence their key.
    pub(crate) fn stream_key(self) -> u64 {
        match self {
            Method::TwoStepVarDecomp => Method::TwoStepForward.stream_key(),
            m => Method::ALL.iter().position(|x| *x == m).unwrap_or(0) as u64,
        }
    }

    /// Parses a comma-separated list. `all` selects every method and `or_ps`
    /// both standard-error variants.
    pub fn parse_list(list: &str) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "all" => out.extend(Method::ALL),
                "or_ps" => out.extend([Method::OrPsObserved, Method::OrPsSandwich]),
                other => out.push(other.parse()?),
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidArgument("empty estimator list".into()));
        }
        let mut seen = Vec::new();
        out.retain(|m| {
            let fresh = !seen.contains(m);
            seen.push(*m);
            fresh
        });
        out.sort_by_key(|m| Method::ALL.iter().position(|x| x == m));
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                let known: Vec<&str> = Method::ALL.iter().map(|m| m.tag()).collect();
                Error::InvalidArgument(format!("unknown estimator `{s}` (known: {})", known.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResamplingConfig {
    /// Posterior draws `M` for the Bayesian estimators.
    pub n_draws: usize,
    /// Bootstrap resamples `B` for the frequentist estimators.
    pub n_boot: usize,
    /// Marginal treatment probabilities in the weight numerators.
    pub stabilize: bool,
}

impl Default for ResamplingConfig {
    fn default() -> Self {
        Self {
            n_draws: 200,
            n_boot: 200,
            stabilize: true,
        }
    }
}

impl ResamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_draws < 2 || self.n_boot < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 draws and 2 bootstrap resamples (got M = {}, B = {})",
                self.n_draws, self.n_boot
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub method: Method,
    pub point: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub draws: Option<Vec<f64>>,
    /// Convergence flags (1/0), iteration counts, weight ranges, failure
    /// counts and similar.
    pub diagnostics: BTreeMap<String, f64>,
    /// Free-text warnings, e.g. dropped collinear columns.
    pub notes: Vec<String>,
    /// Full-sample propensity coefficients, when the method fits them.
    pub propensity_coef: Option<Vec<f64>>,
}

impl EstimateResult {
    pub fn new(method: Method, point: f64, se: f64) -> Self {
        let se = se.max(0.0);
        Self {
            method,
            point,
            se,
            ci: (point - WALD_Z * se, point + WALD_Z * se),
            draws: None,
            diagnostics: BTreeMap::new(),
            notes: Vec::new(),
            propensity_coef: None,
        }
    }

    /// Point and standard error from the mean and sd of the draws.
    pub fn from_draws(method: Method, draws: Vec<f64>) -> Self {
        let mut r = Self::new(method, mean(&draws), sample_sd(&draws));
        r.draws = Some(draws);
        r
    }

    pub fn covers(&self, truth: f64) -> bool {
        (self.point - truth).abs() <= WALD_Z * self.se
    }

    pub(crate) fn diag(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }

    pub(crate) fn with_propensity(mut self, ps: &PropensityFit) -> Self {
        ps.record(&mut self.diagnostics);
        self.propensity_coef = Some(ps.fit.gamma.clone());
        self
    }

    /// `key=value` pairs joined by `;`, keys sorted.
    pub fn diagnostics_string(&self) -> String {
        let mut parts: Vec<String> = self.diagnostics.iter().map(|(k, v)| format!("{k}={v}")).collect();
        parts.extend(self.notes.iter().map(|n| format!("note={n}")));
        parts.join(";")
    }
}

/// Full-sample propensity model with its clamped fitted probabilities.
#[derive(Debug, Clone)]
pub struct PropensityFit {
    pub design: DesignMatrix,
    pub fit: FittedLogistic,
    pub e: Vec<f64>,
    pub n_clamped: usize,
}

impl PropensityFit {
    pub fn new(data: &Dataset, spec: &CovariateSpec) -> Result<Self> {
        let design = propensity_design(data, spec)?;
        let fit = fit_logistic_weighted(&design, data.z(), &vec![1.0; data.n()])?;
        Self::from_fit(design, fit)
    }

    pub(crate) fn from_fit(design: DesignMatrix, fit: FittedLogistic) -> Result<Self> {
        let raw = propensity(&fit, &design)?;
        let mut e = raw.clone();
        clamp_propensity(&mut e);
        let n_clamped = raw.iter().zip(&e).filter(|(a, b)| a != b).count();
        Ok(Self {
            design,
            fit,
            e,
            n_clamped,
        })
    }

    fn record(&self, diag: &mut BTreeMap<String, f64>) {
        diag.insert("ps_converged".into(), f64::from(u8::from(self.fit.converged)));
        diag.insert("ps_iterations".into(), self.fit.iterations as f64);
        diag.insert("ps_separation".into(), f64::from(u8::from(self.fit.separation)));
        diag.insert("ps_clamped".into(), self.n_clamped as f64);
    }
}

/// Runs one estimator.
pub fn estimate(
    method: Method,
    data: &Dataset,
    spec: &CovariateSpec,
    cfg: &ResamplingConfig,
    rng: &RngStream,
) -> Result<EstimateResult> {
    estimate_many(&[method], data, spec, cfg, rng)
        .pop()
        .map(|(_, r)| r)
        .expect("one method in, one result out")
}

/// Runs several estimators on one dataset, sharing work where methods have a
/// common first stage (the two OR/PS variants share one fit, the two two-step
/// variants share their propensity draws). Each method's randomness comes
/// from `rng.split(key)` with a fixed per-method key, so results do not
/// depend on which other methods are requested.
pub fn estimate_many(
    methods: &[Method],
    data: &Dataset,
    spec: &CovariateSpec,
    cfg: &ResamplingConfig,
    rng: &RngStream,
) -> Vec<(Method, Result<EstimateResult>)> {
    if let Err(e) = cfg.validate() {
        return methods.iter().map(|m| (*m, Err(e.clone()))).collect();
    }
    let wants = |m: Method| methods.contains(&m);
    let or_ps_fit = (wants(Method::OrPsObserved) || wants(Method::OrPsSandwich)).then(|| or_ps(data, spec));
    let two_step_fit = (wants(Method::TwoStepForward) || wants(Method::TwoStepVarDecomp))
        .then(|| two_step(data, spec, cfg, &rng.split(Method::TwoStepForward.stream_key())));

    methods
        .iter()
        .map(|&m| {
            let stream = rng.split(m.stream_key());
            let r = match m {
                Method::Naive => naive(data, cfg, &stream),
                Method::Adjusted => adjusted(data, spec, cfg, &stream),
                Method::Iptw => iptw(data, spec, cfg, &stream),
                Method::OrPsObserved | Method::OrPsSandwich => match or_ps_fit.as_ref().expect("fitted above") {
                    Ok(fit) => fit.result(m),
                    Err(e) => Err(e.clone()),
                },
                Method::Dr => dr(data, spec, cfg, &stream),
                Method::CleverCovariate => clever_covariate_estimator(data, spec, cfg, &stream),
                Method::OrIptw => or_iptw(data, spec, cfg, &stream),
                Method::TwoStepForward | Method::TwoStepVarDecomp => {
                    match two_step_fit.as_ref().expect("fitted above") {
                        Ok(ts) if m == Method::TwoStepForward => Ok(ts.forward.clone()),
                        Ok(ts) => Ok(ts.vardecomp.clone()),
                        Err(e) => Err(e.clone()),
                    }
                }
                Method::Joint => joint_estimation(data, spec, cfg, &stream),
                Method::ImportanceSampling => importance_sampling(data, spec, cfg, &stream),
                Method::ImportanceSamplingDr => importance_sampling_dr(data, spec, cfg, &stream),
            };
            (m, r)
        })
        .collect()
}

/// Error for a resampling loop if too many fits failed.
pub(crate) fn check_failures(what: &'static str, failed: usize, total: usize) -> Result<()> {
    if failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::TooManyFailures { what, failed, total });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert!("bogus".parse::<Method>().is_err());
    }

    #[test]
    fn method_list_parsing() {
        assert_eq!(Method::parse_list("all").unwrap().len(), 13);
        assert_eq!(Method::parse_list("dr, naive").unwrap(), vec![Method::Naive, Method::Dr]);
        assert_eq!(
            Method::parse_list("or_ps,naive,naive").unwrap(),
            vec![Method::Naive, Method::OrPsObserved, Method::OrPsSandwich]
        );
        assert!(Method::parse_list("").is_err());
    }

    #[test]
    fn wald_interval_and_coverage() {
        let r = EstimateResult::new(Method::Naive, 1.0, 0.1);
        assert!((r.ci.0 - 0.804).abs() < 1e-12 && (r.ci.1 - 1.196).abs() < 1e-12);
        assert!(r.covers(1.0));
        assert!(!EstimateResult::new(Method::Naive, 1.3, 0.1).covers(1.0));
    }

    #[test]
    fn config_validation() {
        assert!(ResamplingConfig::default().validate().is_ok());
        let bad = ResamplingConfig {
            n_draws: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
