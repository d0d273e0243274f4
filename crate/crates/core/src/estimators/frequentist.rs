//! Full-sample estimators with analytic or bootstrap standard errors.

use super::bootstrap::bootstrap;
use super::{EstimateResult, Method, PropensityFit, ResamplingConfig};
use crate::data::{CovariateSpec, Dataset};
use crate::design::{OutcomeModel, Treatment};
use crate::error::{Error, Result};
use crate::glm::{adjusted_sandwich_var_phi1, FittedLinear, SandwichVariance};
use crate::numerics::{sample_variance, RngStream};

/// Difference in arm means with the unpooled two-sample standard error.
pub fn naive(data: &Dataset, _cfg: &ResamplingConfig, _rng: &RngStream) -> Result<EstimateResult> {
    let (y1, y0) = split_arms(data);
    let se = (sample_variance(&y1) / y1.len() as f64 + sample_variance(&y0) / y0.len() as f64).sqrt();
    let se = if se.is_finite() { se } else { 0.0 };
    Ok(EstimateResult::new(Method::Naive, naive_point(data), se)
        .diag("n_treated", y1.len() as f64)
        .diag("n_control", y0.len() as f64))
}

fn split_arms(data: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let mut y1 = Vec::new();
    let mut y0 = Vec::new();
    for (y, z) in data.y().iter().zip(data.z()) {
        if *z == 1.0 {
            y1.push(*y);
        } else {
            y0.push(*y);
        }
    }
    (y1, y0)
}

pub(crate) fn naive_point(data: &Dataset) -> f64 {
    let (y1, y0) = split_arms(data);
    y1.iter().sum::<f64>() / y1.len() as f64 - y0.iter().sum::<f64>() / y0.len() as f64
}

/// g-formula with an OLS outcome model on `S`; observed-information SE.
pub fn adjusted(data: &Dataset, spec: &CovariateSpec, _cfg: &ResamplingConfig, _rng: &RngStream) -> Result<EstimateResult> {
    let model = OutcomeModel::new(data, spec)?;
    let fit = model.fit_fixed(data.y(), data.z(), &vec![1.0; data.n()])?;
    let d = model.contrast(None);
    Ok(EstimateResult::new(Method::Adjusted, dot(&d, &fit.phi), fit.contrast_variance(&d).sqrt()))
}

pub(crate) fn adjusted_point(data: &Dataset, spec: &CovariateSpec) -> Result<f64> {
    let model = OutcomeModel::new(data, spec)?;
    let fit = model.fit_fixed(data.y(), data.z(), &vec![1.0; data.n()])?;
    Ok(dot(&model.contrast(None), &fit.phi))
}

/// Horvitz-Thompson contrast with a logistic propensity model on `B`.
pub fn iptw(data: &Dataset, spec: &CovariateSpec, cfg: &ResamplingConfig, rng: &RngStream) -> Result<EstimateResult> {
    let (point, ps) = iptw_point(data, spec)?;
    let boot = bootstrap(data, cfg.n_boot, rng, |d| iptw_point(d, spec).map(|(p, _)| p))?;
    Ok(boot.annotate(EstimateResult::new(Method::Iptw, point, boot.se)).with_propensity(&ps))
}

pub(crate) fn iptw_point(data: &Dataset, spec: &CovariateSpec) -> Result<(f64, PropensityFit)> {
    let ps = PropensityFit::new(data, spec)?;
    let n = data.n() as f64;
    let point = data
        .y()
        .iter()
        .zip(data.z())
        .zip(&ps.e)
        .map(|((y, z), e)| y * z / e - y * (1.0 - z) / (1.0 - e))
        .sum::<f64>()
        / n;
    Ok((point, ps))
}

/// Outcome regression on `(1, z, s, g{ê})` with both standard errors.
#[derive(Debug, Clone)]
pub struct OrPsFit {
    pub point: f64,
    pub obs_se: f64,
    pub sandwich: Result<SandwichVariance>,
    pub ps: PropensityFit,
    pub outcome: FittedLinear,
    pub dropped: Vec<String>,
}

pub fn or_ps(data: &Dataset, spec: &CovariateSpec) -> Result<OrPsFit> {
    let ps = PropensityFit::new(data, spec)?;
    let mut model = OutcomeModel::new(data, spec)?.with_ps_basis(&ps.e);
    let (outcome, dropped) = model.fit(data.y(), data.z(), &vec![1.0; data.n()])?;
    let d = model.contrast(None);
    let sandwich = adjusted_sandwich_var_phi1(&outcome, &ps.fit, data, spec);
    Ok(OrPsFit {
        point: dot(&d, &outcome.phi),
        obs_se: outcome.contrast_variance(&d).sqrt(),
        sandwich,
        ps,
        outcome,
        dropped,
    })
}

impl OrPsFit {
    /// The result for [`Method::OrPsObserved`] or [`Method::OrPsSandwich`].
    pub fn result(&self, method: Method) -> Result<EstimateResult> {
        let se = match method {
            Method::OrPsObserved => self.obs_se,
            Method::OrPsSandwich => self.sandwich.clone()?.adjusted.sqrt(),
            other => return Err(Error::InvalidArgument(format!("{other} is not an OR/PS variant"))),
        };
        let mut r = EstimateResult::new(method, self.point, se)
            .with_propensity(&self.ps)
            .diag("dropped_basis_columns", self.dropped.len() as f64);
        if let Ok(s) = &self.sandwich {
            r = r.diag("unadjusted_sandwich_se", s.unadjusted.sqrt());
        }
        r.notes.extend(self.dropped.iter().map(|c| format!("dropped collinear column {c}")));
        Ok(r)
    }
}

/// The two parts of the doubly robust estimator: the weighted residual term
/// and the standardised model term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrTerms {
    pub residual: f64,
    pub model: f64,
}

impl DrTerms {
    pub fn total(&self) -> f64 {
        self.residual + self.model
    }
}

/// `Σ ξ_k c(z_k, e_k) (y_k - m_k) + Σ ξ_k {m_k(1) - m_k(0)}`; the frequentist
/// estimator is the case `ξ_k = 1/n`.
pub fn dr_terms(xi: &[f64], y: &[f64], z: &[f64], e: &[f64], m_obs: &[f64], m1: &[f64], m0: &[f64]) -> DrTerms {
    dr_terms_signed(xi, y, z, e, m_obs, m1, m0, -1.0)
}

/// As [`dr_terms`] with residual weights `z/e + sign (1 - z)/(1 - e)`; only
/// the self-check's mutation test uses `sign = +1`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn dr_terms_signed(
    xi: &[f64],
    y: &[f64],
    z: &[f64],
    e: &[f64],
    m_obs: &[f64],
    m1: &[f64],
    m0: &[f64],
    sign: f64,
) -> DrTerms {
    let mut residual = 0.0;
    let mut model = 0.0;
    for k in 0..xi.len() {
        let c = z[k] / e[k] + sign * (1.0 - z[k]) / (1.0 - e[k]);
        residual += xi[k] * c * (y[k] - m_obs[k]);
        model += xi[k] * (m1[k] - m0[k]);
    }
    DrTerms { residual, model }
}

/// Doubly robust estimator components on the full sample.
#[derive(Debug, Clone)]
pub struct DrParts {
    pub terms: DrTerms,
    pub ps: PropensityFit,
    pub outcome: FittedLinear,
}

/// Evaluates the doubly robust estimator with the outcome model on `S`, or,
/// with `clever = true`, on `S` plus the clever covariate.
pub fn dr_parts(data: &Dataset, spec: &CovariateSpec, clever: bool) -> Result<DrParts> {
    let ps = PropensityFit::new(data, spec)?;
    let mut model = OutcomeModel::new(data, spec)?;
    if clever {
        model = model.with_clever_covariate(ps.e.clone());
    }
    let (outcome, _) = model.fit(data.y(), data.z(), &vec![1.0; data.n()])?;
    let m_obs = model.predict(&outcome.phi, Treatment::Observed(data.z()))?;
    let m1 = model.predict(&outcome.phi, Treatment::Constant(1.0))?;
    let m0 = model.predict(&outcome.phi, Treatment::Constant(0.0))?;
    let xi = vec![1.0 / data.n() as f64; data.n()];
    let terms = dr_terms(&xi, data.y(), data.z(), &ps.e, &m_obs, &m1, &m0);
    Ok(DrParts { terms, ps, outcome })
}

pub fn dr(data: &Dataset, spec: &CovariateSpec, cfg: &ResamplingConfig, rng: &RngStream) -> Result<EstimateResult> {
    let parts = dr_parts(data, spec, false)?;
    let boot = bootstrap(data, cfg.n_boot, rng, |d| dr_parts(d, spec, false).map(|p| p.terms.total()))?;
    Ok(boot
        .annotate(EstimateResult::new(Method::Dr, parts.terms.total(), boot.se))
        .with_propensity(&parts.ps)
        .diag("residual_term", parts.terms.residual))
}

/// Outcome regression with the clever covariate, standardised:
/// `φ̂₁ + φ̂₃ n⁻¹ Σ {1/ê_i + 1/(1 - ê_i)}` for the additive model.
pub fn clever_covariate_estimator(
    data: &Dataset,
    spec: &CovariateSpec,
    cfg: &ResamplingConfig,
    rng: &RngStream,
) -> Result<EstimateResult> {
    let (point, ps, max_c, dropped) = clever_point(data, spec)?;
    let boot = bootstrap(data, cfg.n_boot, rng, |d| clever_point(d, spec).map(|r| r.0))?;
    let mut r = boot
        .annotate(EstimateResult::new(Method::CleverCovariate, point, boot.se))
        .with_propensity(&ps)
        .diag("max_abs_clever", max_c);
    r.notes.extend(dropped.iter().map(|c| format!("dropped collinear column {c}")));
    Ok(r)
}

pub(crate) fn clever_point(data: &Dataset, spec: &CovariateSpec) -> Result<(f64, PropensityFit, f64, Vec<String>)> {
    let ps = PropensityFit::new(data, spec)?;
    let mut model = OutcomeModel::new(data, spec)?.with_clever_covariate(ps.e.clone());
    let max_c = model.max_abs_clever(data.z()).unwrap_or(0.0);
    let (fit, dropped) = model.fit(data.y(), data.z(), &vec![1.0; data.n()])?;
    Ok((dot(&model.contrast(None), &fit.phi), ps, max_c, dropped))
}

/// `w_i = P_E(z_i) / P(Z = z_i | b_i)`. With `treated_share = None` the
/// numerator is 1.
pub fn ipt_weights(z: &[f64], e: &[f64], treated_share: Option<f64>) -> Vec<f64> {
    let (p1, p0) = treated_share.map_or((1.0, 1.0), |p| (p, 1.0 - p));
    z.iter()
        .zip(e)
        .map(|(z, e)| if *z == 1.0 { p1 / e } else { p0 / (1.0 - e) })
        .collect()
}

/// Outcome regression weighted by inverse treatment probabilities,
/// standardised over the sample.
pub fn or_iptw(data: &Dataset, spec: &CovariateSpec, cfg: &ResamplingConfig, rng: &RngStream) -> Result<EstimateResult> {
    let (point, ps, w) = or_iptw_point(data, spec, cfg.stabilize)?;
    let boot = bootstrap(data, cfg.n_boot, rng, |d| or_iptw_point(d, spec, cfg.stabilize).map(|r| r.0))?;
    let (lo, hi) = w.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    Ok(boot
        .annotate(EstimateResult::new(Method::OrIptw, point, boot.se))
        .with_propensity(&ps)
        .diag("weight_min", lo)
        .diag("weight_max", hi))
}

pub(crate) fn or_iptw_point(data: &Dataset, spec: &CovariateSpec, stabilize: bool) -> Result<(f64, PropensityFit, Vec<f64>)> {
    let ps = PropensityFit::new(data, spec)?;
    let w = ipt_weights(data.z(), &ps.e, stabilize.then(|| data.treated_fraction()));
    let model = OutcomeModel::new(data, spec)?;
    let fit = model.fit_fixed(data.y(), data.z(), &w)?;
    Ok((dot(&model.contrast(None), &fit.phi), ps, w))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
