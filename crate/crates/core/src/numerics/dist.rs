use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::linalg::{psd_factor, Matrix};
use crate::error::{Error, Result};

/// Lower clamp of [`expit`]; the upper clamp is `1 - EXPIT_FLOOR`.
pub const EXPIT_FLOOR: f64 = 1e-12;

/// Logistic function, clamped to `[1e-12, 1 - 1e-12]`.
pub fn expit(x: f64) -> f64 {
    let p = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    p.clamp(EXPIT_FLOOR, 1.0 - EXPIT_FLOOR)
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// One draw from the uniform Dirichlet distribution on the n-simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletDraw {
    weights: Vec<f64>,
}

impl DirichletDraw {
    /// The centre of the simplex, `(1/n, ..., 1/n)`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("Dirichlet dimension must be at least 1".into()));
        }
        Ok(Self {
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }
}

/// Normalised unit exponentials, i.e. `Dirichlet(1, ..., 1)`.
pub fn sample_dirichlet<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<DirichletDraw> {
    if n == 0 {
        return Err(Error::InvalidArgument("Dirichlet dimension must be at least 1".into()));
    }
    let mut weights = Vec::with_capacity(n);
    let mut total = 0.0;
    for _ in 0..n {
        let mut e: f64 = Exp1.sample(rng);
        while e <= 0.0 {
            e = Exp1.sample(rng);
        }
        total += e;
        weights.push(e);
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(DirichletDraw { weights })
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `mean + L z` with `L` a pivoted Cholesky factor of `cov` and `z` standard normal.
pub fn sample_mvn<R: Rng + ?Sized>(mean: &[f64], cov: &Matrix, rng: &mut R) -> Result<Vec<f64>> {
    let l = psd_factor(cov)?;
    sample_mvn_with_factor(mean, &l, rng)
}

/// As [`sample_mvn`] with the factor computed once by the caller.
pub fn sample_mvn_with_factor<R: Rng + ?Sized>(mean: &[f64], factor: &Matrix, rng: &mut R) -> Result<Vec<f64>> {
    let d = mean.len();
    if factor.rows() != d || factor.cols() != d {
        return Err(Error::DimensionMismatch {
            context: "sample_mvn covariance",
            expected: d,
            found: factor.rows(),
        });
    }
    let z: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
    let lz = factor.mul_vec(&z)?;
    Ok(mean.iter().zip(lz).map(|(m, v)| m + v).collect())
}
