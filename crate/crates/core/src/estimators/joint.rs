//! Joint maximum likelihood for the propensity and outcome models, with a
//! normal approximation to the posterior centred at the joint maximum.
//!
//! The joint log-likelihood with the Gaussian variance profiled out is
//!
//! ```text
//! ℓ(φ, γ) = -(n/2) log{RSS(φ, γ)/n} + Σ_i log p(z_i | b_i; γ)
//! ```
//!
//! where `RSS` uses the regressors `(1, z, s, g{e(b; γ)})`. For fixed `γ` the
//! `φ` block is least squares, so `γ` is optimised on the profile by BFGS
//! with central-difference gradients.

use super::frequentist::dot;
use super::{check_failures, EstimateResult, Method, PropensityFit, ResamplingConfig};
use crate::data::{CovariateSpec, Dataset};
use crate::design::OutcomeModel;
use crate::error::{Error, Result};
use crate::glm::{fit_linear_weighted, ps_adjusted_design, DesignMatrix};
use crate::numerics::{expit, psd_factor, sample_mvn_with_factor, Cholesky, Matrix, RngStream};

const MAX_OUTER_ITER: usize = 500;
/// Stop once an accepted step improves the log-likelihood by less than this.
const LOGLIK_TOL: f64 = 1e-8;
const FD_STEP: f64 = 1e-5;
const MAX_JITTER: f64 = 1e-6;

struct JointProblem<'a> {
    data: &'a Dataset,
    base: OutcomeModel,
    ps_design: &'a DesignMatrix,
    keep: Vec<String>,
}

impl JointProblem<'_> {
    fn design(&self, gamma: &[f64]) -> Result<Matrix> {
        ps_adjusted_design(&self.base, self.ps_design, gamma, &self.keep, self.data.z())
    }

    fn ps_loglik(&self, gamma: &[f64]) -> f64 {
        let b = self.ps_design.matrix();
        let z = self.data.z();
        (0..b.rows())
            .map(|i| {
                let e = expit(dot(b.row(i), gamma));
                z[i] * e.ln() + (1.0 - z[i]) * (1.0 - e).ln()
            })
            .sum()
    }

    fn outcome_loglik(&self, rss: f64) -> f64 {
        let n = self.data.n() as f64;
        -0.5 * n * (rss / n).ln()
    }

    /// Profile log-likelihood in `γ` and the maximising `φ`.
    fn profile(&self, gamma: &[f64]) -> Result<(f64, Vec<f64>)> {
        let x = DesignMatrix::from_parts(self.design(gamma)?, self.keep.clone())?;
        let fit = fit_linear_weighted(&x, self.data.y(), &vec![1.0; self.data.n()])?;
        let rss = fit.sigma2 * self.data.n() as f64;
        Ok((self.outcome_loglik(rss) + self.ps_loglik(gamma), fit.phi))
    }

    /// `ℓ(θ)` with `θ = (φ, γ)`.
    fn loglik(&self, theta: &[f64]) -> Result<f64> {
        let p = self.keep.len();
        let (phi, gamma) = theta.split_at(p);
        let x = self.design(gamma)?;
        let rss: f64 = self.residuals(&x, phi).iter().map(|r| r * r).sum();
        Ok(self.outcome_loglik(rss) + self.ps_loglik(gamma))
    }

    fn neg_profile(&self, gamma: &[f64]) -> f64 {
        match self.profile(gamma) {
            Ok((ll, _)) if ll.is_finite() => -ll,
            _ => f64::INFINITY,
        }
    }

    fn gradient(&self, gamma: &[f64]) -> Vec<f64> {
        let mut g = gamma.to_vec();
        (0..gamma.len())
            .map(|j| {
                let h = FD_STEP * (1.0 + gamma[j].abs());
                g[j] = gamma[j] + h;
                let plus = self.neg_profile(&g);
                g[j] = gamma[j] - h;
                let minus = self.neg_profile(&g);
                g[j] = gamma[j];
                (plus - minus) / (2.0 * h)
            })
            .collect()
    }

    /// BFGS on the negative profile log-likelihood. Returns `γ*`, `φ*`, the
    /// maximum and the number of outer iterations.
    fn maximize(&self, start: &[f64], h0: &Matrix) -> Result<(Vec<f64>, Vec<f64>, f64, usize)> {
        let mut gamma = start.to_vec();
        let mut f = self.neg_profile(&gamma);
        if !f.is_finite() {
            return Err(Error::InvalidArgument("joint likelihood is not finite at the starting values".into()));
        }
        let mut h_inv = h0.clone();
        let mut grad = self.gradient(&gamma);
        for iter in 0..MAX_OUTER_ITER {
            let dir: Vec<f64> = h_inv.mul_vec(&grad)?.iter().map(|v| -v).collect();
            let mut slope = dot(&grad, &dir);
            let dir = if slope < 0.0 {
                dir
            } else {
                // not a descent direction: reset to steepest descent
                h_inv = h0.clone();
                let d: Vec<f64> = h0.mul_vec(&grad)?.iter().map(|v| -v).collect();
                slope = dot(&grad, &d);
                d
            };
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let cand: Vec<f64> = gamma.iter().zip(&dir).map(|(g, d)| g + t * d).collect();
                let fc = self.neg_profile(&cand);
                if fc <= f + 1e-4 * t * slope {
                    accepted = Some((cand, fc));
                    break;
                }
                t *= 0.5;
            }
            let Some((cand, fc)) = accepted else {
                // no decrease possible at working precision
                let (ll, phi) = self.profile(&gamma)?;
                return Ok((gamma, phi, ll, iter));
            };
            let improvement = f - fc;
            let new_grad = self.gradient(&cand);
            let s: Vec<f64> = cand.iter().zip(&gamma).map(|(a, b)| a - b).collect();
            let yv: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &yv);
            if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
                bfgs_update(&mut h_inv, &s, &yv, sy)?;
            }
            gamma = cand;
            f = fc;
            grad = new_grad;
            if improvement < LOGLIK_TOL {
                let (ll, phi) = self.profile(&gamma)?;
                return Ok((gamma, phi, ll, iter + 1));
            }
        }
        Err(Error::NonConvergence {
            what: "joint likelihood maximisation",
            iterations: MAX_OUTER_ITER,
            last_iterate: gamma,
        })
    }

    /// `∂ℓ/∂φ = (n / RSS) Xᵀ r` at `(φ, γ)`.
    fn phi_gradient(&self, phi: &[f64], gamma: &[f64]) -> Result<Vec<f64>> {
        let x = self.design(gamma)?;
        let ones = vec![1.0; x.rows()];
        let r = self.residuals(&x, phi);
        let rss: f64 = r.iter().map(|v| v * v).sum();
        let n = self.data.n() as f64;
        Ok(x.weighted_cross(&ones, &r).into_iter().map(|v| n * v / rss).collect())
    }

    fn residuals(&self, x: &Matrix, phi: &[f64]) -> Vec<f64> {
        let y = self.data.y();
        (0..x.rows()).map(|i| y[i] - dot(x.row(i), phi)).collect()
    }

    /// Hessian of `ℓ(θ)`. The `φφ` block is exact, `φγ` is a central
    /// difference in `γ` of the exact `∂ℓ/∂φ`, and only `γγ` uses second
    /// differences of `ℓ`. Second differences across the whole of `θ` lose
    /// the weakly identified basis coefficients to rounding at this step.
    fn hessian(&self, theta: &[f64]) -> Result<Matrix> {
        let k = theta.len();
        let p = self.keep.len();
        let q = k - p;
        let (phi, gamma) = theta.split_at(p);
        let n = self.data.n() as f64;
        let mut hess = Matrix::zeros(k, k);

        let x = self.design(gamma)?;
        let ones = vec![1.0; x.rows()];
        let r = self.residuals(&x, phi);
        let rss: f64 = r.iter().map(|v| v * v).sum();
        let gram = x.weighted_gram(&ones);
        let xr = x.weighted_cross(&ones, &r);
        for a in 0..p {
            for b in 0..p {
                hess.set(a, b, -n / rss * gram.get(a, b) + 2.0 * n / (rss * rss) * xr[a] * xr[b]);
            }
        }

        let mut g = gamma.to_vec();
        for j in 0..q {
            let h = FD_STEP * (1.0 + gamma[j].abs());
            g[j] = gamma[j] + h;
            let plus = self.phi_gradient(phi, &g)?;
            g[j] = gamma[j] - h;
            let minus = self.phi_gradient(phi, &g)?;
            g[j] = gamma[j];
            for a in 0..p {
                let v = (plus[a] - minus[a]) / (2.0 * h);
                hess.set(a, p + j, v);
                hess.set(p + j, a, v);
            }
        }

        let f0 = self.loglik(theta)?;
        let mut t = theta.to_vec();
        let at = |t: &mut Vec<f64>, moves: &[(usize, f64)]| -> Result<f64> {
            for &(i, d) in moves {
                t[i] = theta[i] + d;
            }
            let v = self.loglik(t);
            for &(i, _) in moves {
                t[i] = theta[i];
            }
            v
        };
        let h: Vec<f64> = theta.iter().map(|t| FD_STEP * (1.0 + t.abs())).collect();
        for i in p..k {
            let fp = at(&mut t, &[(i, h[i])])?;
            let fm = at(&mut t, &[(i, -h[i])])?;
            hess.set(i, i, (fp - 2.0 * f0 + fm) / (h[i] * h[i]));
            for j in p..i {
                let fpp = at(&mut t, &[(i, h[i]), (j, h[j])])?;
                let fpm = at(&mut t, &[(i, h[i]), (j, -h[j])])?;
                let fmp = at(&mut t, &[(i, -h[i]), (j, h[j])])?;
                let fmm = at(&mut t, &[(i, -h[i]), (j, -h[j])])?;
                let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
                hess.set(i, j, v);
                hess.set(j, i, v);
            }
        }
        if !hess.is_finite() {
            return Err(Error::InvalidArgument("joint Hessian is not finite".into()));
        }
        Ok(hess)
    }
}

fn bfgs_update(h: &mut Matrix, s: &[f64], y: &[f64], sy: f64) -> Result<()> {
    let rho = 1.0 / sy;
    let hy = h.mul_vec(y)?;
    let yhy = dot(y, &hy);
    let q = s.len();
    for i in 0..q {
        for j in 0..q {
            let v = h.get(i, j) - rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
            h.set(i, j, v);
        }
    }
    Ok(())
}

/// `(-H)⁻¹`, adding a ridge of at most [`MAX_JITTER`] if needed.
fn covariance_from_hessian(hess: &Matrix) -> Result<(Matrix, f64)> {
    let k = hess.rows();
    let mut neg = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            neg.set(i, j, -hess.get(i, j));
        }
    }
    let mut jitter = 0.0;
    loop {
        let mut a = neg.clone();
        for i in 0..k {
            a.set(i, i, a.get(i, i) + jitter);
        }
        match Cholesky::new(&a) {
            Ok(c) => return Ok((c.inverse(), jitter)),
            Err(e) if jitter >= MAX_JITTER => return Err(e),
            Err(_) => jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 },
        }
    }
}

pub fn joint_estimation(data: &Dataset, spec: &CovariateSpec, cfg: &ResamplingConfig, rng: &RngStream) -> Result<EstimateResult> {
    let ps = PropensityFit::new(data, spec)?;
    let base = OutcomeModel::new(data, spec)?;
    let mut at_mle = base.clone().with_ps_basis(&ps.e);
    let (_, dropped) = at_mle.fit(data.y(), data.z(), &vec![1.0; data.n()])?;
    let keep = at_mle.labels();
    let d = at_mle.contrast(None);
    let problem = JointProblem {
        data,
        base,
        ps_design: &ps.design,
        keep,
    };

    let (gamma, phi, ll, iterations) = problem.maximize(&ps.fit.gamma, &ps.fit.cov)?;
    let theta: Vec<f64> = phi.iter().chain(&gamma).copied().collect();
    let (cov, jitter) = covariance_from_hessian(&problem.hessian(&theta)?)?;
    let factor = psd_factor(&cov)?;

    let mut draws = Vec::with_capacity(cfg.n_draws);
    let mut failed = 0;
    for j in 0..cfg.n_draws {
        let mut gen = rng.split(j as u64).generator();
        match sample_mvn_with_factor(&theta, &factor, &mut gen) {
            Ok(t) => draws.push(dot(&d, &t[..phi.len()])),
            Err(_) => failed += 1,
        }
    }
    check_failures("joint posterior draws", failed, cfg.n_draws)?;
    let shift = gamma.iter().zip(&ps.fit.gamma).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let mut r = EstimateResult::from_draws(Method::Joint, draws)
        .with_propensity(&ps)
        .diag("outer_iterations", iterations as f64)
        .diag("log_likelihood", ll)
        .diag("hessian_jitter", jitter)
        .diag("gamma_shift", shift)
        .diag("mode_contrast", dot(&d, &phi));
    r.notes.extend(dropped.iter().map(|c| format!("dropped collinear column {c}")));
    Ok(r)
}
