//! Builds the treatment-model and outcome-model designs from a dataset and a
//! covariate selection.
//!
//! An outcome model has columns `(1, z, s, [z·s], [extra], [c(z, e)])`, where
//! `extra` holds treatment-independent regressors such as the propensity
//! score basis and `c` is the clever covariate. Standardised contrasts are
//! linear in the coefficients, `Σ_i w_i {m(1, ·) - m(0, ·)} = dᵀ φ`, and
//! [`OutcomeModel::contrast`] returns `d`.

use crate::data::{CovariateSpec, Dataset};
use crate::error::{Error, Result};
use crate::glm::{
    clever_covariate, cubic_ps_basis, fit_linear_weighted, DesignMatrix, FittedLinear, INTERCEPT_LABEL,
    TREATMENT_LABEL,
};
use crate::numerics::Matrix;

/// Propensity scores are clamped to `[PS_CLAMP, 1 - PS_CLAMP]` before they
/// are used in weights or derived regressors.
pub const PS_CLAMP: f64 = 1e-6;
pub const CLEVER_LABEL: &str = "(clever covariate)";
pub const PS_BASIS_LABELS: [&str; 3] = ["g1(e)", "g2(e)", "g3(e)"];

pub fn clamp_propensity(e: &mut [f64]) {
    for v in e.iter_mut() {
        *v = v.clamp(PS_CLAMP, 1.0 - PS_CLAMP);
    }
}

/// Intercept plus the `b` covariates.
pub fn propensity_design(data: &Dataset, spec: &CovariateSpec) -> Result<DesignMatrix> {
    spec.validate(data)?;
    let cols: Vec<(String, Vec<f64>)> = spec.b_columns.iter().map(|t| (t.label(data), t.values(data))).collect();
    DesignMatrix::with_intercept(data.n(), &cols)
}

#[derive(Debug, Clone, Copy)]
pub enum Treatment<'a> {
    Observed(&'a [f64]),
    Constant(f64),
}

impl Treatment<'_> {
    #[inline]
    fn at(&self, i: usize) -> f64 {
        match self {
            Treatment::Observed(z) => z[i],
            Treatment::Constant(v) => *v,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OutcomeModel {
    n: usize,
    s: Vec<(String, Vec<f64>)>,
    interactions: bool,
    extra: Vec<(String, Vec<f64>)>,
    clever: Option<Vec<f64>>,
}

impl OutcomeModel {
    /// `m(z, s; φ) = φ₀ + φ₁ z + φ₂ᵀ s` (plus `z·s` terms if the spec asks).
    pub fn new(data: &Dataset, spec: &CovariateSpec) -> Result<Self> {
        spec.validate(data)?;
        Ok(Self {
            n: data.n(),
            s: spec.s_columns.iter().map(|t| (t.label(data), t.values(data))).collect(),
            interactions: spec.treatment_interactions,
            extra: Vec::new(),
            clever: None,
        })
    }

    /// Adds the centred cubic basis of the propensity score.
    pub fn with_ps_basis(mut self, e: &[f64]) -> Self {
        let basis = cubic_ps_basis(e);
        for (k, label) in PS_BASIS_LABELS.iter().enumerate() {
            self.extra.push((label.to_string(), basis.column(k)));
        }
        self
    }

    /// Adds the clever covariate `c(z, e)`; `e` should already be clamped.
    pub fn with_clever_covariate(mut self, e: Vec<f64>) -> Self {
        self.clever = Some(e);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> Vec<String> {
        let mut labels = vec![INTERCEPT_LABEL.to_string(), TREATMENT_LABEL.to_string()];
        labels.extend(self.s.iter().map(|(l, _)| l.clone()));
        if self.interactions {
            labels.extend(self.s.iter().map(|(l, _)| format!("(treatment):{l}")));
        }
        labels.extend(self.extra.iter().map(|(l, _)| l.clone()));
        if self.clever.is_some() {
            labels.push(CLEVER_LABEL.to_string());
        }
        labels
    }

    /// Whether `label` names a derived column that may be dropped when it
    /// turns out collinear (propensity basis or clever covariate).
    pub fn is_droppable(&self, label: &str) -> bool {
        label == CLEVER_LABEL || self.extra.iter().any(|(l, _)| l == label)
    }

    pub fn drop_column(&mut self, label: &str) -> bool {
        if label == CLEVER_LABEL && self.clever.is_some() {
            self.clever = None;
            return true;
        }
        let before = self.extra.len();
        self.extra.retain(|(l, _)| l != label);
        self.extra.len() != before
    }

    pub fn max_abs_clever(&self, z: &[f64]) -> Option<f64> {
        self.clever
            .as_ref()
            .map(|e| z.iter().zip(e).fold(0.0_f64, |m, (zi, ei)| m.max(clever_covariate(*zi, *ei).abs())))
    }

    fn width(&self) -> usize {
        let s = self.s.len();
        2 + s + if self.interactions { s } else { 0 } + self.extra.len() + usize::from(self.clever.is_some())
    }

    pub fn design(&self, treatment: Treatment<'_>) -> Result<DesignMatrix> {
        if let Treatment::Observed(z) = treatment {
            if z.len() != self.n {
                return Err(Error::DimensionMismatch {
                    context: "outcome design treatment",
                    expected: self.n,
                    found: z.len(),
                });
            }
        }
        let p = self.width();
        let mut data = Vec::with_capacity(self.n * p);
        for i in 0..self.n {
            let zi = treatment.at(i);
            data.push(1.0);
            data.push(zi);
            for (_, col) in &self.s {
                data.push(col[i]);
            }
            if self.interactions {
                for (_, col) in &self.s {
                    data.push(zi * col[i]);
                }
            }
            for (_, col) in &self.extra {
                data.push(col[i]);
            }
            if let Some(e) = &self.clever {
                data.push(clever_covariate(zi, e[i]));
            }
        }
        DesignMatrix::from_parts(Matrix::from_row_major(self.n, p, data)?, self.labels())
    }

    /// `d = Σ_i w_i {x_i(1) - x_i(0)}` with `w` defaulting to `1/n`.
    pub fn contrast(&self, weights: Option<&[f64]>) -> Vec<f64> {
        let uniform = 1.0 / self.n as f64;
        let w = |i: usize| weights.map_or(uniform, |w| w[i]);
        let total: f64 = (0..self.n).map(w).sum();
        let mut d = vec![0.0, total];
        d.extend(std::iter::repeat_n(0.0, self.s.len()));
        if self.interactions {
            for (_, col) in &self.s {
                d.push((0..self.n).map(|i| w(i) * col[i]).sum());
            }
        }
        d.extend(std::iter::repeat_n(0.0, self.extra.len()));
        if let Some(e) = &self.clever {
            d.push((0..self.n).map(|i| w(i) * (1.0 / e[i] + 1.0 / (1.0 - e[i]))).sum());
        }
        d
    }

    /// Fitted means `m(z_i, ·; φ)` for every row.
    pub fn predict(&self, phi: &[f64], treatment: Treatment<'_>) -> Result<Vec<f64>> {
        self.design(treatment)?.matrix().mul_vec(phi)
    }

    /// Weighted least-squares fit with the columns as they stand.
    pub fn fit_fixed(&self, y: &[f64], z: &[f64], weights: &[f64]) -> Result<FittedLinear> {
        fit_linear_weighted(&self.design(Treatment::Observed(z))?, y, weights)
    }

    /// Weighted least-squares fit; collinear derived columns are dropped one
    /// at a time and reported.
    pub fn fit(&mut self, y: &[f64], z: &[f64], weights: &[f64]) -> Result<(FittedLinear, Vec<String>)> {
        let mut dropped = Vec::new();
        loop {
            let design = self.design(Treatment::Observed(z))?;
            match fit_linear_weighted(&design, y, weights) {
                Ok(fit) => return Ok((fit, dropped)),
                Err(Error::SingularDesign { column }) if self.is_droppable(&column) => {
                    self.drop_column(&column);
                    dropped.push(column);
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CovariateTerm;

    fn data() -> Dataset {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![-1.0], vec![0.5]]).unwrap();
        Dataset::new(vec![1.0, 2.0, 0.0, 1.5], vec![1.0, 0.0, 1.0, 0.0], x, vec!["s".into()]).unwrap()
    }

    #[test]
    fn design_layout_and_contrast() {
        let d = data();
        let spec = CovariateSpec::new(vec![CovariateTerm::identity(0)], vec![]).with_interactions();
        let e = vec![0.5, 0.25, 0.5, 0.8];
        let m = OutcomeModel::new(&d, &spec).unwrap().with_ps_basis(&e).with_clever_covariate(e.clone());
        let x = m.design(Treatment::Observed(d.z())).unwrap();
        assert_eq!(x.cols(), 2 + 1 + 1 + 3 + 1);
        assert_eq!(x.matrix().row(1)[..4], [1.0, 0.0, 2.0, 0.0]);
        assert!((x.matrix().get(1, 7) + 1.0 / 0.75).abs() < 1e-15);

        // contrast equals the averaged design difference
        let x1 = m.design(Treatment::Constant(1.0)).unwrap();
        let x0 = m.design(Treatment::Constant(0.0)).unwrap();
        let d_vec = m.contrast(None);
        for j in 0..x.cols() {
            let avg: f64 = (0..4).map(|i| x1.matrix().get(i, j) - x0.matrix().get(i, j)).sum::<f64>() / 4.0;
            assert!((avg - d_vec[j]).abs() < 1e-14, "column {j}");
        }
    }

    #[test]
    fn constant_propensity_basis_is_dropped() {
        let d = data();
        let spec = CovariateSpec::new(vec![CovariateTerm::identity(0)], vec![]);
        let mut m = OutcomeModel::new(&d, &spec).unwrap().with_ps_basis(&[0.3; 4]);
        let (fit, dropped) = m.fit(d.y(), d.z(), &[1.0; 4]).unwrap();
        assert_eq!(dropped.len(), 3);
        assert_eq!(fit.phi.len(), 3);
    }
}
