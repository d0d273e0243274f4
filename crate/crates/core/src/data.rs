//! Observed samples and the covariate selections used by the outcome and
//! treatment models.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// `sqrt(1 - 2/pi)`: the standard deviation of `|X|` for `X ~ N(0, 1)`.
pub fn half_normal_sd() -> f64 {
    (1.0 - 2.0 / std::f64::consts::PI).sqrt()
}

/// Observed sample: outcome, binary treatment and raw covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    z: Vec<f64>,
    x: Matrix,
    names: Vec<String>,
}

impl Dataset {
    /// Validates and builds a dataset. `z` must be 0/1 with both arms present.
    pub fn new(y: Vec<f64>, z: Vec<f64>, x: Matrix, names: Vec<String>) -> Result<Self> {
        let n = y.len();
        if z.len() != n {
            return Err(Error::DimensionMismatch {
                context: "treatment vector",
                expected: n,
                found: z.len(),
            });
        }
        if x.rows() != n {
            return Err(Error::DimensionMismatch {
                context: "covariate rows",
                expected: n,
                found: x.rows(),
            });
        }
        if names.len() != x.cols() {
            return Err(Error::DimensionMismatch {
                context: "covariate names",
                expected: x.cols(),
                found: names.len(),
            });
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("outcome is not finite at index {i}")));
        }
        if let Some(i) = z.iter().position(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::Data(format!("treatment at index {i} is {} (must be 0 or 1)", z[i])));
        }
        for i in 0..n {
            if let Some(j) = x.row(i).iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!("covariate `{}` is not finite at index {i}", names[j])));
            }
        }
        let treated = z.iter().filter(|v| **v == 1.0).count();
        if treated == 0 {
            return Err(Error::EmptyArm { arm: 1 });
        }
        if treated == n {
            return Err(Error::EmptyArm { arm: 0 });
        }
        Ok(Self { y, z, x, names })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn treated_fraction(&self) -> f64 {
        self.z.iter().sum::<f64>() / self.n() as f64
    }

    /// Rows `idx` (with repetition). Errors if the result has an empty arm.
    pub fn resample(&self, idx: &[usize]) -> Result<Self> {
        let y = idx.iter().map(|&i| self.y[i]).collect();
        let z = idx.iter().map(|&i| self.z[i]).collect();
        Dataset::new(y, z, self.x.select_rows(idx), self.names.clone())
    }

    /// Same covariates with treatment relabelled `z -> 1 - z`.
    pub fn relabel_treatment(&self) -> Self {
        Self {
            y: self.y.clone(),
            z: self.z.iter().map(|v| 1.0 - v).collect(),
            x: self.x.clone(),
            names: self.names.clone(),
        }
    }

    /// Same treatment and covariates with a different outcome vector.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Self> {
        Dataset::new(y, self.z.clone(), self.x.clone(), self.names.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// `|x| / sqrt(1 - 2/pi)`
    AbsStandardized,
}

impl Transform {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::AbsStandardized => v.abs() / half_normal_sd(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateTerm {
    pub column: usize,
    pub transform: Transform,
}

impl CovariateTerm {
    pub fn identity(column: usize) -> Self {
        Self {
            column,
            transform: Transform::Identity,
        }
    }

    pub fn abs_standardized(column: usize) -> Self {
        Self {
            column,
            transform: Transform::AbsStandardized,
        }
    }

    pub fn label(&self, data: &Dataset) -> String {
        let name = &data.names()[self.column];
        match self.transform {
            Transform::Identity => name.clone(),
            Transform::AbsStandardized => format!("abs:{name}"),
        }
    }

    pub fn values(&self, data: &Dataset) -> Vec<f64> {
        let x = data.x();
        (0..data.n()).map(|i| self.transform.apply(x.get(i, self.column))).collect()
    }
}

/// Which (transformed) covariates enter the outcome model (`s`) and the
/// treatment model (`b`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CovariateSpec {
    pub s_columns: Vec<CovariateTerm>,
    pub b_columns: Vec<CovariateTerm>,
    /// Adds `z * s_j` terms to every outcome model.
    #[serde(default)]
    pub treatment_interactions: bool,
}

impl CovariateSpec {
    pub fn new(s_columns: Vec<CovariateTerm>, b_columns: Vec<CovariateTerm>) -> Self {
        Self {
            s_columns,
            b_columns,
            treatment_interactions: false,
        }
    }

    pub fn with_interactions(mut self) -> Self {
        self.treatment_interactions = true;
        self
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        let p = data.x().cols();
        for t in self.s_columns.iter().chain(&self.b_columns) {
            if t.column >= p {
                return Err(Error::InvalidArgument(format!(
                    "covariate column {} out of range (dataset has {p} columns)",
                    t.column
                )));
            }
        }
        Ok(())
    }

    /// Parses a comma-separated column list such as `x1,abs:x2` against `data`.
    pub fn parse_terms(list: &str, names: &[String]) -> Result<Vec<CovariateTerm>> {
        let mut out = Vec::new();
        for raw in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (transform, name) = match raw.strip_prefix("abs:") {
                Some(rest) => (Transform::AbsStandardized, rest),
                None => (Transform::Identity, raw),
            };
            let column = names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Data(format!("unknown covariate column `{name}`")))?;
            out.push(CovariateTerm { column, transform });
        }
        Ok(out)
    }
}

/// The two covariate selections of the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Misspecified outcome model, correct treatment model.
    I,
    /// Correct outcome model, misspecified treatment model.
    II,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::I => write!(f, "I"),
            Scenario::II => write!(f, "II"),
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "I" | "i" | "1" => Ok(Scenario::I),
            "II" | "ii" | "2" => Ok(Scenario::II),
            other => Err(Error::InvalidArgument(format!("unknown scenario `{other}` (expected I or II)"))),
        }
    }
}
