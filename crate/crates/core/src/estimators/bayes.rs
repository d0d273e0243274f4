//! Estimators built from Dirichlet-weighted refits: two-step propensity
//! draws, importance sampling and its doubly robust form.
//!
//! Draw `j` uses the generator of `rng.split(j)` and every propensity refit
//! is warm-started from the full-sample fit, which is itself computed from
//! `(b, z)` alone.

use super::frequentist::{dot, dr_terms, ipt_weights, DrTerms};
use super::{check_failures, EstimateResult, Method, PropensityFit, ResamplingConfig};
use crate::data::{CovariateSpec, Dataset};
use crate::design::{clamp_propensity, OutcomeModel, Treatment};
use crate::error::Result;
use crate::glm::{fit_logistic_weighted_from, propensity, DesignMatrix, FittedLogistic};
use crate::numerics::{mean, sample_dirichlet, sample_mvn, sample_variance, RngStream};

/// Both two-step variants from one set of propensity draws.
#[derive(Debug, Clone)]
pub struct TwoStepResults {
    pub forward: EstimateResult,
    pub vardecomp: EstimateResult,
    /// `φ̂₁(γ⁽ʲ⁾)` (standardised contrast at the fitted outcome coefficients).
    pub conditional_means: Vec<f64>,
    /// Model-based variance of that contrast given `γ⁽ʲ⁾`.
    pub conditional_variances: Vec<f64>,
}

/// For each draw: Dirichlet-weighted propensity fit, outcome regression on
/// `(1, z, s, g{e(b; γ⁽ʲ⁾)})`, and a normal draw of the outcome coefficients.
pub fn two_step(data: &Dataset, spec: &CovariateSpec, cfg: &ResamplingConfig, rng: &RngStream) -> Result<TwoStepResults> {
    let ps = PropensityFit::new(data, spec)?;
    let base = OutcomeModel::new(data, spec)?;
    let n = data.n();
    let ones = vec![1.0; n];
    let mut forward = Vec::with_capacity(cfg.n_draws);
    let mut means = Vec::with_capacity(cfg.n_draws);
    let mut vars = Vec::with_capacity(cfg.n_draws);
    let mut failed = 0;
    let mut dropped_total = 0;
    for j in 0..cfg.n_draws {
        let mut gen = rng.split(j as u64).generator();
        let step = (|| -> Result<(f64, f64, f64, usize)> {
            let xi = sample_dirichlet(n, &mut gen)?;
            let fit = refit_propensity(&ps.design, data.z(), xi.weights(), &ps.fit)?;
            let mut e = propensity(&fit, &ps.design)?;
            clamp_propensity(&mut e);
            let mut model = base.clone().with_ps_basis(&e);
            let (outcome, dropped) = model.fit(data.y(), data.z(), &ones)?;
            let d = model.contrast(None);
            let phi_draw = sample_mvn(&outcome.phi, &outcome.cov, &mut gen)?;
            Ok((dot(&d, &outcome.phi), outcome.contrast_variance(&d), dot(&d, &phi_draw), dropped.len()))
        })();
        match step {
            Ok((m, v, f, dropped)) => {
                means.push(m);
                vars.push(v);
                forward.push(f);
                dropped_total += dropped;
            }
            Err(_) => failed += 1,
        }
    }
    check_failures("two-step draws", failed, cfg.n_draws)?;

    let within = mean(&vars);
    let between = sample_variance(&means);
    let forward = EstimateResult::from_draws(Method::TwoStepForward, forward)
        .with_propensity(&ps)
        .diag("failed_draws", failed as f64)
        .diag("dropped_basis_columns", dropped_total as f64);
    let vardecomp = EstimateResult::new(Method::TwoStepVarDecomp, mean(&means), (within + between).sqrt())
        .with_propensity(&ps)
        .diag("failed_draws", failed as f64)
        .diag("within_variance", within)
        .diag("between_variance", between);
    Ok(TwoStepResults {
        forward,
        vardecomp,
        conditional_means: means,
        conditional_variances: vars,
    })
}

fn refit_propensity(design: &DesignMatrix, z: &[f64], xi: &[f64], full: &FittedLogistic) -> Result<FittedLogistic> {
    fit_logistic_weighted_from(design, z, xi, Some(&full.gamma))
}

/// Weights for the outcome regression inside an importance-sampling draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutcomeWeighting {
    /// `ξ_k w_k(ξ)`, the importance-sampling estimator's weights.
    #[default]
    Importance,
    /// `ξ_k` only; with uniform `ξ` this is the ordinary least-squares fit.
    Dirichlet,
}

/// Per-draw evaluation of the importance-sampling estimators for an
/// arbitrary weight vector `ξ` on the simplex.
#[derive(Debug, Clone)]
pub struct ImportanceSampler<'a> {
    data: &'a Dataset,
    ps: PropensityFit,
    model: OutcomeModel,
    stabilize: bool,
}

/// Fitted quantities for one weight vector.
struct DrawFit {
    e: Vec<f64>,
    phi: Vec<f64>,
}

impl<'a> ImportanceSampler<'a> {
    pub fn new(data: &'a Dataset, spec: &CovariateSpec, stabilize: bool) -> Result<Self> {
        Ok(Self {
            data,
            ps: PropensityFit::new(data, spec)?,
            model: OutcomeModel::new(data, spec)?,
            stabilize,
        })
    }

    pub fn full_sample_propensity(&self) -> &PropensityFit {
        &self.ps
    }

    fn fit(&self, xi: &[f64], weighting: OutcomeWeighting) -> Result<DrawFit> {
        let z = self.data.z();
        let fit = refit_propensity(&self.ps.design, z, xi, &self.ps.fit)?;
        let mut e = propensity(&fit, &self.ps.design)?;
        clamp_propensity(&mut e);
        let outcome_w: Vec<f64> = match weighting {
            OutcomeWeighting::Importance => {
                let share = self.stabilize.then(|| dot(xi, z));
                ipt_weights(z, &e, share).iter().zip(xi).map(|(w, x)| w * x).collect()
            }
            OutcomeWeighting::Dirichlet => xi.to_vec(),
        };
        let outcome = self.model.fit_fixed(self.data.y(), z, &outcome_w)?;
        Ok(DrawFit { e, phi: outcome.phi })
    }

    /// `Σ_k ξ_k {m(1, s_k; φ̂(ξ)) - m(0, s_k; φ̂(ξ))}`.
    pub fn is_draw(&self, xi: &[f64]) -> Result<f64> {
        let f = self.fit(xi, OutcomeWeighting::Importance)?;
        Ok(dot(&self.model.contrast(Some(xi)), &f.phi))
    }

    /// Residual and model terms of the doubly robust draw.
    pub fn is_dr_draw(&self, xi: &[f64], weighting: OutcomeWeighting) -> Result<DrTerms> {
        let f = self.fit(xi, weighting)?;
        let z = self.data.z();
        let m_obs = self.model.predict(&f.phi, Treatment::Observed(z))?;
        let m1 = self.model.predict(&f.phi, Treatment::Constant(1.0))?;
        let m0 = self.model.predict(&f.phi, Treatment::Constant(0.0))?;
        Ok(dr_terms(xi, self.data.y(), z, &f.e, &m_obs, &m1, &m0))
    }
}

fn draw_loop<F>(n: usize, m: usize, rng: &RngStream, what: &'static str, eval: F) -> Result<(Vec<f64>, usize)>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut draws = Vec::with_capacity(m);
    let mut failed = 0;
    for j in 0..m {
        let mut gen = rng.split(j as u64).generator();
        match sample_dirichlet(n, &mut gen).and_then(|xi| eval(xi.weights())) {
            Ok(v) if v.is_finite() => draws.push(v),
            _ => failed += 1,
        }
    }
    check_failures(what, failed, m)?;
    Ok((draws, failed))
}

pub fn importance_sampling(
    data: &Dataset,
    spec: &CovariateSpec,
    cfg: &ResamplingConfig,
    rng: &RngStream,
) -> Result<EstimateResult> {
    let sampler = ImportanceSampler::new(data, spec, cfg.stabilize)?;
    let (draws, failed) = draw_loop(data.n(), cfg.n_draws, rng, "importance-sampling draws", |xi| sampler.is_draw(xi))?;
    Ok(EstimateResult::from_draws(Method::ImportanceSampling, draws)
        .with_propensity(&sampler.ps)
        .diag("failed_draws", failed as f64))
}

pub fn importance_sampling_dr(
    data: &Dataset,
    spec: &CovariateSpec,
    cfg: &ResamplingConfig,
    rng: &RngStream,
) -> Result<EstimateResult> {
    let sampler = ImportanceSampler::new(data, spec, cfg.stabilize)?;
    let (draws, failed) = draw_loop(data.n(), cfg.n_draws, rng, "importance-sampling draws", |xi| {
        sampler.is_dr_draw(xi, OutcomeWeighting::Importance).map(|t| t.total())
    })?;
    Ok(EstimateResult::from_draws(Method::ImportanceSamplingDr, draws)
        .with_propensity(&sampler.ps)
        .diag("failed_draws", failed as f64))
}
