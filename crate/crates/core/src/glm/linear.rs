use super::{normalized_weights, DesignMatrix, TREATMENT_LABEL};
use crate::error::{Error, Result};
use crate::numerics::{Cholesky, Matrix};

/// Weighted least-squares fit of a Gaussian linear model with the variance
/// profiled out.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedLinear {
    pub phi: Vec<f64>,
    /// Weighted residual sum of squares over the weight total.
    pub sigma2: f64,
    /// `sigma2 (Xᵀ W X)⁻¹` with weights rescaled to sum to `n`.
    pub cov: Matrix,
    /// Sum of the weights as supplied.
    pub n_effective: f64,
    pub labels: Vec<String>,
}

impl FittedLinear {
    pub fn coefficient(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|j| self.phi[j])
    }

    /// Variance of `dᵀ φ̂` under the model-based covariance.
    pub fn contrast_variance(&self, d: &[f64]) -> f64 {
        self.cov.quad_form(d).max(0.0)
    }
}

pub fn fit_linear_weighted(x: &DesignMatrix, y: &[f64], weights: &[f64]) -> Result<FittedLinear> {
    let n = x.rows();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            context: "linear response",
            expected: n,
            found: y.len(),
        });
    }
    let n_effective: f64 = weights.iter().sum();
    let w = normalized_weights(weights, n)?;
    let xm = x.matrix();
    let gram = xm.weighted_gram(&w);
    let rhs = xm.weighted_cross(&w, y);
    let chol = Cholesky::new(&gram).map_err(|e| match e {
        Error::SingularMatrix { pivot, .. } => x.singular_column(pivot),
        other => other,
    })?;
    let mut phi = chol.solve(&rhs);
    // one step of iterative refinement on the normal equations
    let resid_ne: Vec<f64> = gram.mul_vec(&phi)?.iter().zip(&rhs).map(|(a, b)| b - a).collect();
    for (p, d) in phi.iter_mut().zip(chol.solve(&resid_ne)) {
        *p += d;
    }
    let mut wrss = 0.0;
    for i in 0..n {
        let fitted: f64 = xm.row(i).iter().zip(&phi).map(|(a, b)| a * b).sum();
        let r = y[i] - fitted;
        wrss += w[i] * r * r;
    }
    let sigma2 = wrss / n as f64;
    let mut cov = chol.inverse();
    for i in 0..cov.rows() {
        for j in 0..cov.cols() {
            cov.set(i, j, cov.get(i, j) * sigma2);
        }
    }
    if !cov.is_finite() || phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularDesign {
            column: "(non-finite fit)".into(),
        });
    }
    Ok(FittedLinear {
        phi,
        sigma2,
        cov,
        n_effective,
        labels: x.labels().to_vec(),
    })
}

/// Model-based standard error of the treatment coefficient, with any
/// propensity-score regressors treated as fixed.
pub fn observed_info_se_phi1(fit: &FittedLinear) -> Result<f64> {
    let j = fit
        .labels
        .iter()
        .position(|l| l == TREATMENT_LABEL)
        .ok_or_else(|| Error::InvalidArgument("outcome fit has no treatment column".into()))?;
    Ok(fit.cov.get(j, j).max(0.0).sqrt())
}
