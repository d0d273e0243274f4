//! Numerical identities that must hold exactly (up to rounding) on small
//! fixed instances. Run by `causal-dr selfcheck` and by the test suite.

use rand::Rng;
use serde::Serialize;

use crate::data::{CovariateSpec, CovariateTerm, Dataset, Scenario};
use crate::design::{propensity_design, OutcomeModel, Treatment};
use crate::error::Result;
use crate::estimators::{
    clever_point, dr_parts, dr_terms_signed, estimate_many, or_iptw_point, ImportanceSampler, Method, OutcomeWeighting,
    PropensityFit, ResamplingConfig,
};
use crate::glm::{
    fit_linear_weighted, fit_logistic_weighted, outcome_score_cross_derivative, propensity, ps_adjusted_design,
};
use crate::numerics::{expit, sample_dirichlet, Matrix, RngStream};
use crate::simulation::{apply_scenario, generate_data, run_simulation, SimConfig};

pub const IDENTITY_TOL: f64 = 1e-8;
pub const CROSS_DERIVATIVE_TOL: f64 = 1e-6;
const SEED: u64 = 20_240_601;

/// Deliberate corruptions used to show that the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mutation {
    #[default]
    None,
    /// Residual weights `z/e + (1 - z)/(1 - e)` in the doubly robust sum.
    DrResidualSign,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub description: &'static str,
    /// Largest discrepancy observed.
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn new(name: &'static str, description: &'static str, residual: Result<f64>, tolerance: f64) -> Self {
        let residual = residual.unwrap_or(f64::INFINITY);
        Self {
            name,
            description,
            residual,
            tolerance,
            passed: residual <= tolerance,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:<22} residual {:.3e} (tolerance {:.0e})  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.residual,
            self.tolerance,
            self.description
        )
    }
}

pub fn run_selfcheck(mutation: Mutation) -> Vec<CheckOutcome> {
    vec![
        CheckOutcome::new(
            "identity-1",
            "importance sampling with uniform weights equals OR/IPTW",
            identity_is_or_iptw(),
            IDENTITY_TOL,
        ),
        CheckOutcome::new(
            "identity-2",
            "IS/DR with uniform weights and unweighted outcome fit equals DR",
            identity_is_dr_dr(),
            IDENTITY_TOL,
        ),
        CheckOutcome::new(
            "identity-3",
            "DR with the clever-covariate outcome model equals the clever covariate estimator",
            identity_clever_dr(mutation),
            IDENTITY_TOL,
        ),
        CheckOutcome::new(
            "identity-4",
            "saturated outcome model: IS/DR residual term vanishes for every draw",
            identity_saturated_outcome(),
            IDENTITY_TOL,
        ),
        CheckOutcome::new(
            "identity-5",
            "saturated propensity model: IS/DR equals the IPT-weighted sum",
            identity_saturated_propensity(),
            IDENTITY_TOL,
        ),
        CheckOutcome::new(
            "propensity-isolation",
            "propensity coefficients inside every estimator except joint are bit-identical to a fit on (b, z)",
            propensity_isolation(),
            0.0,
        ),
        CheckOutcome::new(
            "irls-score",
            "weighted logistic score at convergence",
            irls_score(),
            crate::glm::SCORE_TOL,
        ),
        CheckOutcome::new(
            "wls-normal-equations",
            "relative weighted least-squares normal-equation residual",
            wls_normal_equations(),
            IDENTITY_TOL,
        ),
        CheckOutcome::new(
            "cross-derivative",
            "finite-difference outcome-score cross derivative against the chain rule",
            cross_derivative_oracle(),
            CROSS_DERIVATIVE_TOL,
        ),
        CheckOutcome::new(
            "determinism",
            "small simulation is bit-identical on 1 and 2 threads and on rerun",
            determinism(),
            0.0,
        ),
    ]
}

fn scenario_data() -> Result<Vec<(Dataset, CovariateSpec)>> {
    let mut out = Vec::new();
    for (k, scenario) in [Scenario::I, Scenario::II].into_iter().enumerate() {
        let data = generate_data(200, &RngStream::new(SEED, k as u64))?;
        let spec = apply_scenario(&data, scenario)?;
        out.push((data, spec));
    }
    Ok(out)
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn identity_is_or_iptw() -> Result<f64> {
    let mut worst = 0.0_f64;
    for (data, spec) in scenario_data()? {
        let sampler = ImportanceSampler::new(&data, &spec, true)?;
        let is = sampler.is_draw(&uniform(data.n()))?;
        let (or_iptw, _, _) = or_iptw_point(&data, &spec, true)?;
        worst = worst.max((is - or_iptw).abs());
    }
    Ok(worst)
}

fn identity_is_dr_dr() -> Result<f64> {
    let mut worst = 0.0_f64;
    for (data, spec) in scenario_data()? {
        let sampler = ImportanceSampler::new(&data, &spec, true)?;
        let is_dr = sampler.is_dr_draw(&uniform(data.n()), OutcomeWeighting::Dirichlet)?;
        let dr = dr_parts(&data, &spec, false)?;
        worst = worst.max((is_dr.total() - dr.terms.total()).abs());
    }
    Ok(worst)
}

/// Largest of the residual term and the gap between the two estimators.
fn identity_clever_dr(mutation: Mutation) -> Result<f64> {
    let sign = match mutation {
        Mutation::None => -1.0,
        Mutation::DrResidualSign => 1.0,
    };
    let mut worst = 0.0_f64;
    for (data, spec) in scenario_data()? {
        let ps = PropensityFit::new(&data, &spec)?;
        let mut model = OutcomeModel::new(&data, &spec)?.with_clever_covariate(ps.e.clone());
        let (fit, _) = model.fit(data.y(), data.z(), &vec![1.0; data.n()])?;
        let m_obs = model.predict(&fit.phi, Treatment::Observed(data.z()))?;
        let m1 = model.predict(&fit.phi, Treatment::Constant(1.0))?;
        let m0 = model.predict(&fit.phi, Treatment::Constant(0.0))?;
        let terms = dr_terms_signed(&uniform(data.n()), data.y(), data.z(), &ps.e, &m_obs, &m1, &m0, sign);
        let (cc, ..) = clever_point(&data, &spec)?;
        worst = worst.max(terms.residual.abs()).max((terms.total() - cc).abs());
    }
    Ok(worst)
}

fn discrete_dataset(s: &[f64], z: &[f64], y: &[f64]) -> Result<Dataset> {
    let x = Matrix::from_columns(s.len(), &[s])?;
    Dataset::new(y.to_vec(), z.to_vec(), x, vec!["s".into()])
}

/// 12 rows, binary `s`, all four `(z, s)` cells occupied; outcome model with
/// treatment interaction (saturated); 50 Dirichlet draws per treatment
/// pattern.
fn identity_saturated_outcome() -> Result<f64> {
    let s = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
    let patterns: [[f64; 12]; 3] = [
        [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0],
        [1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        [0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0],
    ];
    let mut gen = RngStream::new(SEED, 40).generator();
    let spec = CovariateSpec::new(vec![CovariateTerm::identity(0)], vec![CovariateTerm::identity(0)]).with_interactions();
    let mut worst = 0.0_f64;
    for z in patterns {
        let y: Vec<f64> = (0..12).map(|i| 2.0 * z[i] - s[i] + gen.random_range(-1.0..1.0)).collect();
        let data = discrete_dataset(&s, &z, &y)?;
        let sampler = ImportanceSampler::new(&data, &spec, true)?;
        for _ in 0..50 {
            let xi = sample_dirichlet(12, &mut gen)?;
            let terms = sampler.is_dr_draw(xi.weights(), OutcomeWeighting::Importance)?;
            worst = worst.max(terms.residual.abs());
        }
    }
    Ok(worst)
}

/// 8 rows, binary `s` (4 per level), `b = s`; every treatment pattern with
/// both arms in both strata (196 datasets).
fn identity_saturated_propensity() -> Result<f64> {
    let s = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
    let y = [1.3, -0.2, 0.7, 2.1, -1.1, 0.4, 3.0, 0.9];
    let spec = CovariateSpec::new(vec![CovariateTerm::identity(0)], vec![CovariateTerm::identity(0)]);
    let xi = uniform(8);
    let mut worst = 0.0_f64;
    for mask in 0u32..256 {
        let z: Vec<f64> = (0..8).map(|i| f64::from((mask >> i) & 1)).collect();
        let arms_ok = [0..4, 4..8].into_iter().all(|r| {
            let t: f64 = z[r].iter().sum();
            t > 0.0 && t < 4.0
        });
        if !arms_ok {
            continue;
        }
        let data = discrete_dataset(&s, &z, &y)?;
        let sampler = ImportanceSampler::new(&data, &spec, true)?;
        let is_dr = sampler.is_dr_draw(&xi, OutcomeWeighting::Importance)?.total();
        let e = &sampler.full_sample_propensity().e;
        let ipw: f64 = (0..8)
            .map(|k| xi[k] * y[k] * (z[k] / e[k] - (1.0 - z[k]) / (1.0 - e[k])))
            .sum();
        worst = worst.max((is_dr - ipw).abs());
    }
    Ok(worst)
}

/// Largest `|γ_estimator - γ_reference|` over all methods but joint, also
/// after replacing the outcome; zero means bit-identical.
fn propensity_isolation() -> Result<f64> {
    let cfg = ResamplingConfig {
        n_draws: 4,
        n_boot: 4,
        stabilize: true,
    };
    let methods: Vec<Method> = Method::ALL.into_iter().filter(|m| *m != Method::Joint).collect();
    let mut worst = 0.0_f64;
    for (data, spec) in scenario_data()? {
        let reference = PropensityFit::new(&data, &spec)?.fit.gamma;
        let other_y: Vec<f64> = data.y().iter().map(|v| 3.0 * v.sin() - 1.0).collect();
        let other = data.with_outcome(other_y)?;
        for d in [&data, &other] {
            for (m, r) in estimate_many(&methods, d, &spec, &cfg, &RngStream::new(SEED, 7)) {
                let Some(gamma) = r?.propensity_coef else {
                    if matches!(m, Method::Naive | Method::Adjusted) {
                        continue;
                    }
                    return Ok(f64::INFINITY);
                };
                for (a, b) in gamma.iter().zip(&reference) {
                    if a.to_bits() != b.to_bits() {
                        worst = worst.max((a - b).abs().max(f64::MIN_POSITIVE));
                    }
                }
            }
        }
    }
    Ok(worst)
}

fn irls_score() -> Result<f64> {
    let mut worst = 0.0_f64;
    let mut gen = RngStream::new(SEED, 50).generator();
    for (data, spec) in scenario_data()? {
        let b = propensity_design(&data, &spec)?;
        let w = sample_dirichlet(data.n(), &mut gen)?.into_weights();
        let fit = fit_logistic_weighted(&b, data.z(), &w)?;
        if !fit.converged {
            return Ok(f64::INFINITY);
        }
        let total: f64 = w.iter().sum();
        let scale = data.n() as f64 / total;
        let e = propensity(&fit, &b)?;
        for j in 0..b.cols() {
            let score: f64 = (0..data.n())
                .map(|i| scale * w[i] * (data.z()[i] - e[i]) * b.matrix().get(i, j))
                .sum();
            worst = worst.max(score.abs());
        }
    }
    Ok(worst)
}

fn wls_normal_equations() -> Result<f64> {
    let mut worst = 0.0_f64;
    let mut gen = RngStream::new(SEED, 60).generator();
    for (data, spec) in scenario_data()? {
        let ps = PropensityFit::new(&data, &spec)?;
        let x = OutcomeModel::new(&data, &spec)?
            .with_ps_basis(&ps.e)
            .design(Treatment::Observed(data.z()))?;
        let w: Vec<f64> = (0..data.n()).map(|_| gen.random_range(0.1..5.0)).collect();
        let fit = fit_linear_weighted(&x, data.y(), &w)?;
        let xm = x.matrix();
        let resid: Vec<f64> = (0..data.n())
            .map(|i| data.y()[i] - xm.row(i).iter().zip(&fit.phi).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let lhs = xm.weighted_cross(&w, &resid);
        let rhs = xm.weighted_cross(&w, data.y());
        let num = lhs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let den = rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        worst = worst.max(num / den);
    }
    Ok(worst)
}

/// Analytic `Ē[∂U_i^φ/∂γ]` for the design `(1, z, s, (e - ē), (e - ē)², (e - ē)³)`
/// with `e = expit(Bγ)` and no clamping active.
pub fn analytic_cross_derivative(s: &[f64], z: &[f64], y: &[f64], b: &Matrix, gamma: &[f64], phi: &[f64]) -> Matrix {
    let n = y.len();
    let q = gamma.len();
    let e: Vec<f64> = (0..n)
        .map(|i| expit(b.row(i).iter().zip(gamma).map(|(a, g)| a * g).sum()))
        .collect();
    let ebar = e.iter().sum::<f64>() / n as f64;
    let u: Vec<f64> = e.iter().map(|v| v - ebar).collect();
    // de_i/dγ_j and its column means
    let de = |i: usize, j: usize| e[i] * (1.0 - e[i]) * b.get(i, j);
    let de_bar: Vec<f64> = (0..q).map(|j| (0..n).map(|i| de(i, j)).sum::<f64>() / n as f64).collect();
    let mut out = Matrix::zeros(6, q);
    for j in 0..q {
        for i in 0..n {
            let x = [1.0, z[i], s[i], u[i], u[i] * u[i], u[i].powi(3)];
            let du = de(i, j) - de_bar[j];
            let dx = [0.0, 0.0, 0.0, du, 2.0 * u[i] * du, 3.0 * u[i] * u[i] * du];
            let r = y[i] - x.iter().zip(phi).map(|(a, p)| a * p).sum::<f64>();
            let dfit: f64 = dx.iter().zip(phi).map(|(a, p)| a * p).sum();
            for a in 0..6 {
                out.set(a, j, out.get(a, j) + (dx[a] * r - x[a] * dfit) / n as f64);
            }
        }
    }
    out
}

fn cross_derivative_oracle() -> Result<f64> {
    let s = [0.3, -1.2, 0.8, 1.5, -0.4];
    let bcol = [1.1, -0.7, 0.2, -1.6, 0.9];
    let z = [1.0, 0.0, 1.0, 0.0, 1.0];
    let y = [0.5, -1.0, 2.2, 0.1, 1.4];
    let x = Matrix::from_columns(5, &[&s, &bcol])?;
    let data = Dataset::new(y.to_vec(), z.to_vec(), x, vec!["s".into(), "b".into()])?;
    let spec = CovariateSpec::new(vec![CovariateTerm::identity(0)], vec![CovariateTerm::identity(1)]);
    let base = OutcomeModel::new(&data, &spec)?;
    let ps_design = propensity_design(&data, &spec)?;
    let keep = base.clone().with_ps_basis(&[0.5; 5]).labels();
    let gamma = [0.3, -0.8];
    let phi = [0.2, 1.1, -0.5, 2.0, -3.0, 4.0];
    let fd = outcome_score_cross_derivative(
        |g: &[f64]| ps_adjusted_design(&base, &ps_design, g, &keep, &z),
        &y,
        &phi,
        &gamma,
    )?;
    let exact = analytic_cross_derivative(&s, &z, &y, ps_design.matrix(), &gamma, &phi);
    let mut worst = 0.0_f64;
    for a in 0..6 {
        for j in 0..2 {
            worst = worst.max((fd.get(a, j) - exact.get(a, j)).abs());
        }
    }
    Ok(worst)
}

/// 0 if bit-identical, otherwise the largest difference (or infinity for a
/// structural mismatch).
fn determinism() -> Result<f64> {
    let mut cfg = SimConfig {
        n: 80,
        reps: 4,
        seed: SEED,
        scenario: Scenario::I,
        dgp: Default::default(),
        methods: vec![
            Method::Naive,
            Method::Dr,
            Method::TwoStepForward,
            Method::Joint,
            Method::ImportanceSamplingDr,
        ],
        resampling: ResamplingConfig {
            n_draws: 6,
            n_boot: 6,
            stabilize: true,
        },
        threads: 1,
    };
    let one = run_simulation(&cfg)?;
    let again = run_simulation(&cfg)?;
    cfg.threads = 2;
    let two = run_simulation(&cfg)?;
    let mut worst = 0.0_f64;
    for other in [&again, &two] {
        if other.len() != one.len() {
            return Ok(f64::INFINITY);
        }
        for (a, b) in one.iter().zip(other.iter()) {
            if a.method != b.method || a.rep != b.rep {
                return Ok(f64::INFINITY);
            }
            for (u, v) in [(a.point, b.point), (a.se, b.se)] {
                if u.to_bits() != v.to_bits() {
                    worst = worst.max((u - v).abs().max(f64::MIN_POSITIVE));
                }
            }
        }
    }
    Ok(worst)
}
