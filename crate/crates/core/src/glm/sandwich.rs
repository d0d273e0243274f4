//! Sandwich variance for an outcome regression whose regressors depend on an
//! estimated propensity score.
//!
//! With `U_i^φ = x_i(γ) {y_i - x_i(γ)ᵀ φ}` the per-observation outcome score
//! (σ² cancels and is dropped) and `U_i^γ = b_i {z_i - e_i}` the logistic
//! score, the influence terms are
//!
//! ```text
//! B_i = U_i^φ + Ē[∂U_i^φ/∂γ] Ē[-U_i^γγ]⁻¹ U_i^γ
//! var(φ̂) = Ē[-U^φφ]⁻¹ Ē[B_i B_iᵀ] Ē[-U^φφ]⁻¹ / n
//! ```
//!
//! where `Ē` is a sample mean. The cross derivative is taken by central
//! differences of the per-observation score in `γ`, so any regressor
//! construction (including the centred basis) is handled uniformly.

use super::{DesignMatrix, FittedLinear, FittedLogistic};
use crate::data::{CovariateSpec, Dataset};
use crate::design::{clamp_propensity, propensity_design, OutcomeModel, Treatment};
use crate::error::{Error, Result};
use crate::numerics::{expit, Cholesky, Matrix};

/// Relative step for the central differences: `h_j = 1e-5 (1 + |γ_j|)`.
pub const CROSS_DERIVATIVE_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichVariance {
    /// With the correction for estimating the propensity score.
    pub adjusted: f64,
    /// The conventional sandwich, treating the propensity score as known.
    pub unadjusted: f64,
}

/// `Ē[∂U_i^φ/∂γ]` (p × q) by central differences.
pub fn outcome_score_cross_derivative<F>(design_at: F, y: &[f64], phi: &[f64], gamma: &[f64]) -> Result<Matrix>
where
    F: Fn(&[f64]) -> Result<Matrix>,
{
    let p = phi.len();
    let q = gamma.len();
    let mut out = Matrix::zeros(p, q);
    let mut g = gamma.to_vec();
    for j in 0..q {
        let h = CROSS_DERIVATIVE_STEP * (1.0 + gamma[j].abs());
        g[j] = gamma[j] + h;
        let plus = mean_score(&design_at(&g)?, y, phi)?;
        g[j] = gamma[j] - h;
        let minus = mean_score(&design_at(&g)?, y, phi)?;
        g[j] = gamma[j];
        for a in 0..p {
            out.set(a, j, (plus[a] - minus[a]) / (2.0 * h));
        }
    }
    Ok(out)
}

fn mean_score(x: &Matrix, y: &[f64], phi: &[f64]) -> Result<Vec<f64>> {
    if x.cols() != phi.len() || x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "outcome score design",
            expected: phi.len(),
            found: x.cols(),
        });
    }
    let n = x.rows();
    let mut s = vec![0.0; phi.len()];
    for i in 0..n {
        let row = x.row(i);
        let r = y[i] - row.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>();
        for (acc, v) in s.iter_mut().zip(row) {
            *acc += v * r;
        }
    }
    s.iter_mut().for_each(|v| *v /= n as f64);
    Ok(s)
}

/// Variance of `dᵀ φ̂` for an unweighted least-squares outcome fit whose
/// design `design_at(γ)` depends on the logistic coefficients `γ` fitted on
/// `ps_x` and `z`.
pub fn adjusted_sandwich_variance<F>(
    design_at: F,
    y: &[f64],
    phi: &[f64],
    ps_x: &Matrix,
    z: &[f64],
    gamma: &[f64],
    contrast: &[f64],
) -> Result<SandwichVariance>
where
    F: Fn(&[f64]) -> Result<Matrix>,
{
    let n = y.len();
    let nf = n as f64;
    let x = design_at(gamma)?;
    let p = x.cols();
    let q = gamma.len();
    if contrast.len() != p || phi.len() != p {
        return Err(Error::DimensionMismatch {
            context: "sandwich contrast",
            expected: p,
            found: contrast.len(),
        });
    }

    // bread: Ē[-U^φφ] = XᵀX / n
    let mut bread = x.weighted_gram(&vec![1.0; n]);
    scale(&mut bread, 1.0 / nf);
    let bread_inv = Cholesky::new(&bread)?.inverse();

    // Ē[-U^γγ]
    let mut info_w = vec![0.0; n];
    let mut u_gamma = Matrix::zeros(n, q);
    for i in 0..n {
        let row = ps_x.row(i);
        let e = expit(row.iter().zip(gamma).map(|(a, b)| a * b).sum());
        info_w[i] = e * (1.0 - e);
        for k in 0..q {
            u_gamma.set(i, k, row[k] * (z[i] - e));
        }
    }
    let mut info = ps_x.weighted_gram(&info_w);
    scale(&mut info, 1.0 / nf);
    let info_inv = Cholesky::new(&info)
        .map_err(|_| Error::SingularInformation)?
        .inverse();

    let cross = outcome_score_cross_derivative(&design_at, y, phi, gamma)?;
    let correction = cross.matmul(&info_inv)?; // p × q

    let mut meat_adj = Matrix::zeros(p, p);
    let mut meat_raw = Matrix::zeros(p, p);
    let mut b = vec![0.0; p];
    let mut u = vec![0.0; p];
    for i in 0..n {
        let row = x.row(i);
        let r = y[i] - row.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>();
        let ug = u_gamma.row(i);
        for a in 0..p {
            u[a] = row[a] * r;
            b[a] = u[a] + correction.row(a).iter().zip(ug).map(|(c, g)| c * g).sum::<f64>();
        }
        for a in 0..p {
            for c in 0..p {
                meat_adj.set(a, c, meat_adj.get(a, c) + b[a] * b[c]);
                meat_raw.set(a, c, meat_raw.get(a, c) + u[a] * u[c]);
            }
        }
    }
    scale(&mut meat_adj, 1.0 / nf);
    scale(&mut meat_raw, 1.0 / nf);

    // var(dᵀφ̂) = (A⁻¹d)ᵀ M (A⁻¹d) / n
    let ad = bread_inv.mul_vec(contrast)?;
    Ok(SandwichVariance {
        adjusted: meat_adj.quad_form(&ad).max(0.0) / nf,
        unadjusted: meat_raw.quad_form(&ad).max(0.0) / nf,
    })
}

fn scale(m: &mut Matrix, s: f64) {
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            m.set(i, j, m.get(i, j) * s);
        }
    }
}

/// Adjusted sandwich variance of the standardised treatment contrast (the
/// treatment coefficient for an additive model) of a propensity-adjusted
/// outcome regression `(1, z, s, g{e(b; γ)})`.
///
/// `outcome_fit.labels` determines which basis columns are present, so a fit
/// that dropped collinear basis columns is reproduced at every perturbed `γ`.
pub fn adjusted_sandwich_var_phi1(
    outcome_fit: &FittedLinear,
    ps_fit: &FittedLogistic,
    data: &Dataset,
    spec: &CovariateSpec,
) -> Result<SandwichVariance> {
    let ps_design = propensity_design(data, spec)?;
    let base = OutcomeModel::new(data, spec)?;
    let keep = &outcome_fit.labels;
    let design_at = |gamma: &[f64]| -> Result<Matrix> { ps_adjusted_design(&base, &ps_design, gamma, keep, data.z()) };
    let contrast = {
        let mut m = base.clone().with_ps_basis(&vec![0.5; data.n()]);
        retain_labels(&mut m, keep);
        m.contrast(None)
    };
    adjusted_sandwich_variance(
        design_at,
        data.y(),
        &outcome_fit.phi,
        ps_design.matrix(),
        data.z(),
        &ps_fit.gamma,
        &contrast,
    )
}

pub(crate) fn ps_adjusted_design(
    base: &OutcomeModel,
    ps_design: &DesignMatrix,
    gamma: &[f64],
    keep: &[String],
    z: &[f64],
) -> Result<Matrix> {
    let mut e: Vec<f64> = ps_design.matrix().mul_vec(gamma)?.into_iter().map(expit).collect();
    clamp_propensity(&mut e);
    let mut m = base.clone().with_ps_basis(&e);
    retain_labels(&mut m, keep);
    Ok(m.design(Treatment::Observed(z))?.matrix().clone())
}

fn retain_labels(m: &mut OutcomeModel, keep: &[String]) {
    for label in m.labels() {
        if m.is_droppable(&label) && !keep.contains(&label) {
            m.drop_column(&label);
        }
    }
}
