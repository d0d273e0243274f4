use super::{normalized_weights, DesignMatrix};
use crate::error::{Error, Result};
use crate::numerics::{expit, Cholesky, Matrix};

/// Convergence threshold on the largest absolute weighted score entry.
pub const SCORE_TOL: f64 = 1e-8;
/// Relative log-likelihood change at which IRLS stops even if the score is
/// not yet below [`SCORE_TOL`], provided the score has also stopped
/// shrinking (working precision reached).
const REL_LOGLIK_TOL: f64 = 1e-10;
pub const IRLS_MAX_ITER: usize = 100;
/// Coefficients beyond this magnitude indicate (quasi-)separation.
const SEPARATION_BOUND: f64 = 30.0;
/// A log-likelihood this close to zero means every unit is fitted with
/// near certainty, which only happens under complete separation.
const PERFECT_FIT_LOGLIK: f64 = 1e-6;

/// Weighted logistic regression fit.
///
/// Weights are rescaled to sum to the number of rows before fitting, so the
/// score, information and covariance are those of a sample of `n` units and
/// do not depend on the overall weight scale.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedLogistic {
    pub gamma: Vec<f64>,
    /// Inverse of the weighted observed information.
    pub cov: Matrix,
    /// Set iff the largest absolute score entry is below [`SCORE_TOL`].
    pub converged: bool,
    pub iterations: usize,
    pub max_abs_score: f64,
    pub separation: bool,
    pub log_likelihood: f64,
    pub labels: Vec<String>,
}

pub fn fit_logistic_weighted(x: &DesignMatrix, z: &[f64], weights: &[f64]) -> Result<FittedLogistic> {
    fit_logistic_weighted_from(x, z, weights, None)
}

/// IRLS (Newton-Raphson with step halving), optionally warm-started.
pub fn fit_logistic_weighted_from(
    x: &DesignMatrix,
    z: &[f64],
    weights: &[f64],
    init: Option<&[f64]>,
) -> Result<FittedLogistic> {
    let n = x.rows();
    let q = x.cols();
    if z.len() != n {
        return Err(Error::DimensionMismatch {
            context: "logistic response",
            expected: n,
            found: z.len(),
        });
    }
    let w = normalized_weights(weights, n)?;
    let mut beta = match init {
        Some(b) if b.len() == q => b.to_vec(),
        Some(b) => {
            return Err(Error::DimensionMismatch {
                context: "logistic starting values",
                expected: q,
                found: b.len(),
            })
        }
        None => vec![0.0; q],
    };
    let xm = x.matrix();
    let mut prev_ll: Option<f64> = None;
    let mut prev_score = f64::INFINITY;
    let mut eta = vec![0.0; n];
    let mut score = vec![0.0; q];
    let mut iw = vec![0.0; n];

    for iter in 0..IRLS_MAX_ITER {
        let ll = evaluate(xm, z, &w, &beta, &mut eta, &mut score, &mut iw);
        let max_abs_score = score.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
        let info = xm.weighted_gram(&iw);
        let small_change =
            prev_ll.is_some_and(|p| (ll - p).abs() <= REL_LOGLIK_TOL * p.abs()) && max_abs_score >= 0.5 * prev_score;
        if max_abs_score < SCORE_TOL || small_change {
            let chol = Cholesky::new(&info).map_err(|e| singular(x, e))?;
            let separation = beta.iter().any(|b| b.abs() > SEPARATION_BOUND) || ll > -PERFECT_FIT_LOGLIK;
            return Ok(FittedLogistic {
                gamma: beta,
                cov: chol.inverse(),
                converged: max_abs_score < SCORE_TOL,
                iterations: iter,
                max_abs_score,
                separation,
                log_likelihood: ll,
                labels: x.labels().to_vec(),
            });
        }
        let step = Cholesky::new(&info).map_err(|e| singular(x, e))?.solve(&score);
        let mut t = 1.0;
        let mut candidate: Vec<f64>;
        loop {
            candidate = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let cand_ll = log_likelihood(xm, z, &w, &candidate);
            if cand_ll >= ll - 1e-12 * ll.abs() || t < 1e-10 {
                break;
            }
            t *= 0.5;
        }
        beta = candidate;
        prev_ll = Some(ll);
        prev_score = max_abs_score;
    }
    Err(Error::NonConvergence {
        what: "logistic IRLS",
        iterations: IRLS_MAX_ITER,
        last_iterate: beta,
    })
}

fn singular(x: &DesignMatrix, e: Error) -> Error {
    match e {
        Error::SingularMatrix { pivot, .. } => x.singular_column(pivot),
        other => other,
    }
}

/// Fills `score` and the IRLS working weights `iw = w p (1 - p)`, returns the
/// weighted log-likelihood.
fn evaluate(
    x: &Matrix,
    z: &[f64],
    w: &[f64],
    beta: &[f64],
    eta: &mut [f64],
    score: &mut [f64],
    iw: &mut [f64],
) -> f64 {
    score.iter_mut().for_each(|s| *s = 0.0);
    let mut ll = 0.0;
    for i in 0..x.rows() {
        let row = x.row(i);
        eta[i] = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let p = expit(eta[i]);
        ll += w[i] * (z[i] * p.ln() + (1.0 - z[i]) * (1.0 - p).ln());
        let r = w[i] * (z[i] - p);
        for (s, xv) in score.iter_mut().zip(row) {
            *s += r * xv;
        }
        iw[i] = w[i] * p * (1.0 - p);
    }
    ll
}

fn log_likelihood(x: &Matrix, z: &[f64], w: &[f64], beta: &[f64]) -> f64 {
    let mut ll = 0.0;
    for i in 0..x.rows() {
        let eta: f64 = x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
        let p = expit(eta);
        ll += w[i] * (z[i] * p.ln() + (1.0 - z[i]) * (1.0 - p).ln());
    }
    ll
}

/// Fitted treatment probabilities `expit(B γ)`.
pub fn propensity(fit: &FittedLogistic, b: &DesignMatrix) -> Result<Vec<f64>> {
    if b.cols() != fit.gamma.len() {
        return Err(Error::DimensionMismatch {
            context: "propensity design",
            expected: fit.gamma.len(),
            found: b.cols(),
        });
    }
    Ok(b.matrix().mul_vec(&fit.gamma)?.into_iter().map(expit).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{logit, RngStream};
    use rand::Rng;

    fn intercept_only(n: usize) -> DesignMatrix {
        DesignMatrix::with_intercept(n, &[]).unwrap()
    }

    #[test]
    fn intercept_only_mle_is_logit_of_mean() {
        let z = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let fit = fit_logistic_weighted(&intercept_only(8), &z, &[1.0; 8]).unwrap();
        assert!(fit.converged);
        assert!((fit.gamma[0] - logit(0.25)).abs() < 1e-6);
        assert!((fit.gamma[0] + 1.0986).abs() < 1e-4);
        // information n p (1-p) = 8 * 3/16
        assert!((fit.cov.get(0, 0) - 1.0 / 1.5).abs() < 1e-8);
    }

    #[test]
    fn duplicated_rows_with_half_weights() {
        let mut rng = RngStream::new(3, 0).generator();
        let n = 40;
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let z: Vec<f64> = xs.iter().map(|x| if rng.random::<f64>() < expit(0.5 * x) { 1.0 } else { 0.0 }).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let d = DesignMatrix::with_intercept(n, &[("x".into(), xs.clone())]).unwrap();
        let fit = fit_logistic_weighted(&d, &z, &w).unwrap();

        let xs2: Vec<f64> = xs.iter().chain(&xs).copied().collect();
        let z2: Vec<f64> = z.iter().chain(&z).copied().collect();
        let w2: Vec<f64> = w.iter().chain(&w).map(|v| v / 2.0).collect();
        let d2 = DesignMatrix::with_intercept(2 * n, &[("x".into(), xs2)]).unwrap();
        let fit2 = fit_logistic_weighted(&d2, &z2, &w2).unwrap();
        for (a, b) in fit.gamma.iter().zip(&fit2.gamma) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn score_below_tolerance_when_converged() {
        let mut rng = RngStream::new(4, 0).generator();
        let n = 300;
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z: Vec<f64> = (0..n)
            .map(|i| if rng.random::<f64>() < expit(0.3 + a[i] - b[i]) { 1.0 } else { 0.0 })
            .collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let d = DesignMatrix::with_intercept(n, &[("a".into(), a), ("b".into(), b)]).unwrap();
        let fit = fit_logistic_weighted(&d, &z, &w).unwrap();
        assert!(fit.converged);
        assert!(fit.max_abs_score < SCORE_TOL);
        // warm start lands on the same optimum
        let warm = fit_logistic_weighted_from(&d, &z, &w, Some(&fit.gamma)).unwrap();
        assert_eq!(warm.iterations, 0);
        assert_eq!(warm.gamma, fit.gamma);
    }

    #[test]
    fn separation_is_flagged_not_fatal() {
        let x = vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0];
        let z = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let d = DesignMatrix::with_intercept(6, &[("x".into(), x)]).unwrap();
        let fit = fit_logistic_weighted(&d, &z, &[1.0; 6]).unwrap();
        assert!(fit.separation);
    }

    #[test]
    fn collinear_design_names_column() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let d = DesignMatrix::with_intercept(4, &[("x".into(), x.clone()), ("x_copy".into(), x)]).unwrap();
        let err = fit_logistic_weighted(&d, &[0.0, 1.0, 0.0, 1.0], &[1.0; 4]).unwrap_err();
        assert_eq!(err, Error::SingularDesign { column: "x_copy".into() });
    }

    #[test]
    fn propensity_checks() {
        let b = DesignMatrix::with_intercept(3, &[("x".into(), vec![-1.0, 0.0, 2.0])]).unwrap();
        let mut fit = FittedLogistic {
            gamma: vec![0.0, 0.0],
            cov: Matrix::identity(2),
            converged: true,
            iterations: 0,
            max_abs_score: 0.0,
            separation: false,
            log_likelihood: 0.0,
            labels: b.labels().to_vec(),
        };
        assert_eq!(propensity(&fit, &b).unwrap(), vec![0.5; 3]);
        fit.gamma = vec![0.2, 0.7];
        let e = propensity(&fit, &b).unwrap();
        assert!(e[0] < e[1] && e[1] < e[2]);
        assert!((e[2] - expit(0.2 + 1.4)).abs() < 1e-15);
        fit.gamma = vec![0.0];
        assert!(propensity(&fit, &b).is_err());
    }
}
