//! Weighted GLM fits (logistic by IRLS, Gaussian by weighted least squares),
//! propensity-score derived regressors and the variance estimators for the
//! propensity-adjusted outcome regression.

mod linear;
mod logistic;
mod sandwich;

pub use linear::{fit_linear_weighted, observed_info_se_phi1, FittedLinear};
pub use logistic::{
    fit_logistic_weighted, fit_logistic_weighted_from, propensity, FittedLogistic, IRLS_MAX_ITER, SCORE_TOL,
};
pub use sandwich::{
    adjusted_sandwich_var_phi1, adjusted_sandwich_variance, outcome_score_cross_derivative, SandwichVariance,
    CROSS_DERIVATIVE_STEP,
};

pub(crate) use sandwich::ps_adjusted_design;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const INTERCEPT_LABEL: &str = "(intercept)";
pub const TREATMENT_LABEL: &str = "(treatment)";

/// Regressors with labelled columns; the first column is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    matrix: Matrix,
    labels: Vec<String>,
}

impl DesignMatrix {
    /// Prepends an intercept to the given labelled columns.
    pub fn with_intercept(n: usize, columns: &[(String, Vec<f64>)]) -> Result<Self> {
        let ones = vec![1.0; n];
        let mut refs: Vec<&[f64]> = Vec::with_capacity(columns.len() + 1);
        refs.push(&ones);
        for (label, col) in columns {
            if label == INTERCEPT_LABEL {
                return Err(Error::InvalidArgument("intercept column supplied twice".into()));
            }
            refs.push(col);
        }
        let matrix = Matrix::from_columns(n, &refs)?;
        let mut labels = Vec::with_capacity(columns.len() + 1);
        labels.push(INTERCEPT_LABEL.to_string());
        labels.extend(columns.iter().map(|(l, _)| l.clone()));
        Ok(Self { matrix, labels })
    }

    /// Wraps a matrix whose first column is already the intercept.
    pub fn from_parts(matrix: Matrix, labels: Vec<String>) -> Result<Self> {
        if labels.len() != matrix.cols() {
            return Err(Error::DimensionMismatch {
                context: "design labels",
                expected: matrix.cols(),
                found: labels.len(),
            });
        }
        if labels.first().map(String::as_str) != Some(INTERCEPT_LABEL)
            || labels.iter().filter(|l| *l == INTERCEPT_LABEL).count() != 1
        {
            return Err(Error::InvalidArgument("design needs exactly one leading intercept column".into()));
        }
        Ok(Self { matrix, labels })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn column_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub(crate) fn singular_column(&self, pivot: usize) -> Error {
        Error::SingularDesign {
            column: self.labels.get(pivot).cloned().unwrap_or_else(|| format!("#{pivot}")),
        }
    }
}

/// Normalises weights to sum to the row count, rejecting negative,
/// non-finite or all-zero weights.
pub(crate) fn normalized_weights(weights: &[f64], n: usize) -> Result<Vec<f64>> {
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            context: "weights",
            expected: n,
            found: weights.len(),
        });
    }
    let mut total = 0.0;
    for (i, w) in weights.iter().enumerate() {
        if !w.is_finite() || *w < 0.0 {
            return Err(Error::InvalidArgument(format!("weight {i} is {w} (must be finite and >= 0)")));
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(Error::InvalidArgument("weights are all zero".into()));
    }
    let scale = n as f64 / total;
    Ok(weights.iter().map(|w| w * scale).collect())
}

/// Centred cubic polynomial basis of the propensity score: columns
/// `(e - ē, (e - ē)², (e - ē)³)`.
pub fn cubic_ps_basis(e: &[f64]) -> Matrix {
    let n = e.len();
    let mut m = Matrix::zeros(n, 3);
    if n == 0 {
        return m;
    }
    let center = e.iter().sum::<f64>() / n as f64;
    for (i, v) in e.iter().enumerate() {
        let d = v - center;
        m.set(i, 0, d);
        m.set(i, 1, d * d);
        m.set(i, 2, d * d * d);
    }
    m
}

/// `z/e - (1 - z)/(1 - e)`
#[inline]
pub fn clever_covariate(z: f64, e: f64) -> f64 {
    z / e - (1.0 - z) / (1.0 - e)
}
