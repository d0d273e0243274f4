//! Nonparametric bootstrap over rows.

use rand::Rng;

use super::frequentist::{adjusted_point, clever_point, dr_parts, iptw_point, naive_point, or_iptw_point, or_ps};
use super::{check_failures, EstimateResult, Method, ResamplingConfig};
use crate::data::{CovariateSpec, Dataset};
use crate::error::{Error, Result};
use crate::numerics::{sample_sd, RngStream};

/// Single-arm resamples are redrawn; this many in a row is an error.
const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    pub se: f64,
    pub replicates: Vec<f64>,
    pub failures: usize,
    pub redraws: usize,
}

impl BootstrapSummary {
    pub(crate) fn annotate(&self, r: EstimateResult) -> EstimateResult {
        r.diag("bootstrap_failures", self.failures as f64)
            .diag("bootstrap_redraws", self.redraws as f64)
    }
}

/// Resample `b` uses the generator of `rng.split(b)`.
pub(crate) fn bootstrap<F>(data: &Dataset, n_boot: usize, rng: &RngStream, point: F) -> Result<BootstrapSummary>
where
    F: Fn(&Dataset) -> Result<f64>,
{
    let n = data.n();
    let mut replicates = Vec::with_capacity(n_boot);
    let mut failures = 0;
    let mut redraws = 0;
    for b in 0..n_boot {
        let mut gen = rng.split(b as u64).generator();
        let mut attempts = 0;
        let sample = loop {
            let idx: Vec<usize> = (0..n).map(|_| gen.random_range(0..n)).collect();
            match data.resample(&idx) {
                Ok(d) => break d,
                Err(Error::EmptyArm { .. }) if attempts < MAX_REDRAWS => {
                    attempts += 1;
                    redraws += 1;
                }
                Err(e) => return Err(e),
            }
        };
        match point(&sample) {
            Ok(v) if v.is_finite() => replicates.push(v),
            _ => failures += 1,
        }
    }
    check_failures("bootstrap", failures, n_boot)?;
    Ok(BootstrapSummary {
        se: sample_sd(&replicates),
        replicates,
        failures,
        redraws,
    })
}

/// Bootstrap standard error of a frequentist estimator's point estimate.
pub fn bootstrap_se(
    method: Method,
    data: &Dataset,
    spec: &CovariateSpec,
    cfg: &ResamplingConfig,
    rng: &RngStream,
) -> Result<f64> {
    cfg.validate()?;
    let stream = rng.split(method.stream_key());
    let summary = match method {
        Method::Naive => bootstrap(data, cfg.n_boot, &stream, |d| Ok(naive_point(d))),
        Method::Adjusted => bootstrap(data, cfg.n_boot, &stream, |d| adjusted_point(d, spec)),
        Method::Iptw => bootstrap(data, cfg.n_boot, &stream, |d| iptw_point(d, spec).map(|r| r.0)),
        Method::OrPsObserved | Method::OrPsSandwich => {
            bootstrap(data, cfg.n_boot, &stream, |d| or_ps(d, spec).map(|f| f.point))
        }
        Method::Dr => bootstrap(data, cfg.n_boot, &stream, |d| dr_parts(d, spec, false).map(|p| p.terms.total())),
        Method::CleverCovariate => bootstrap(data, cfg.n_boot, &stream, |d| clever_point(d, spec).map(|r| r.0)),
        Method::OrIptw => bootstrap(data, cfg.n_boot, &stream, |d| {
            or_iptw_point(d, spec, cfg.stabilize).map(|r| r.0)
        }),
        other => {
            return Err(Error::InvalidArgument(format!(
                "{other} reports posterior draws, not a bootstrap standard error"
            )))
        }
    }?;
    Ok(summary.se)
}
