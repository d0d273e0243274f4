use causal_dr_core::glm::{
    adjusted_sandwich_variance, fit_linear_weighted, fit_logistic_weighted, DesignMatrix,
};
use causal_dr_core::estimators::or_ps;
use causal_dr_core::numerics::{expit, standard_normal, Matrix};
use causal_dr_core::simulation::{apply_scenario, generate_data};
use causal_dr_core::{RngStream, Scenario};
use rand::Rng;

// Reference values below come from statsmodels (GLM Binomial with
// freq_weights, WLS, OLS with HC0) on the same fixed data.

fn fixture() -> (DesignMatrix, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = 30;
    let x1: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 / 5.0 - 1.0).collect();
    let x2: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
    let mut z: Vec<f64> = (0..n).map(|i| if (i * 13) % 7 < 3 { 1.0 } else { 0.0 }).collect();
    for i in [2, 5, 11] {
        z[i] = 1.0 - z[i];
    }
    let y: Vec<f64> = (0..n).map(|i| 0.5 + 2.0 * x1[i] - x2[i] + (3.0 * i as f64).sin()).collect();
    let w: Vec<f64> = (0..n).map(|i| 1.0 + (i % 3) as f64).collect();
    let x = DesignMatrix::with_intercept(n, &[("x1".into(), x1), ("x2".into(), x2)]).unwrap();
    (x, z, y, w)
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    for (u, v) in a.iter().zip(b) {
        assert!((u - v).abs() < tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn weighted_logistic_matches_reference() {
    let (x, z, _, w) = fixture();
    let fit = fit_logistic_weighted(&x, &z, &w).unwrap();
    assert!(fit.converged && !fit.separation);
    close(&fit.gamma, &[-0.11020833775014763, -0.11990168337946311, 1.4648262097816473], 1e-8);
    // weights are rescaled to sum n = 30; the reference treats them as
    // frequencies (total 60), so its standard errors are smaller by sqrt(2)
    let ref_se = [0.2871619254936405, 0.44473019225650423, 0.464340624728061];
    for k in 0..3 {
        let se = fit.cov.get(k, k).sqrt();
        assert!((se - ref_se[k] * 2f64.sqrt()).abs() < 1e-6, "{k}: {se}");
    }
}

#[test]
fn weighted_least_squares_matches_reference() {
    let (x, _, y, w) = fixture();
    let fit = fit_linear_weighted(&x, &y, &w).unwrap();
    close(&fit.phi, &[0.4900025766200209, 1.8895997170863565, -0.8053671584937537], 1e-10);
}

#[test]
fn sandwich_without_propensity_dependence_is_hc0() {
    let (x, z, y, _) = fixture();
    let n = y.len();
    let ols = fit_linear_weighted(&x, &y, &vec![1.0; n]).unwrap();
    close(&ols.phi, &[0.4876223592038982, 1.9547596897259703, -0.9870630983861352], 1e-10);
    let hc0 = [0.12060139540550796, 0.18471480134759735, 0.16827905994635176];
    let m = x.matrix().clone();
    for k in 0..3 {
        let mut d = vec![0.0; 3];
        d[k] = 1.0;
        let v = adjusted_sandwich_variance(|_| Ok(m.clone()), &y, &ols.phi, x.matrix(), &z, &[0.0, 0.1, -0.2], &d)
            .unwrap();
        assert!((v.unadjusted.sqrt() - hc0[k]).abs() < 1e-9, "{k}");
        assert!((v.adjusted - v.unadjusted).abs() < 1e-15);
    }
}

#[test]
fn logistic_recovers_generating_coefficients() {
    let truth = [-0.3, 0.8, -0.5];
    let n = 200;
    let mut gen = RngStream::new(101, 0).generator();
    let a: Vec<f64> = (0..n).map(|_| standard_normal(&mut gen)).collect();
    let b: Vec<f64> = (0..n).map(|_| gen.random::<f64>() * 2.0).collect();
    let z: Vec<f64> = (0..n)
        .map(|i| {
            let p = expit(truth[0] + truth[1] * a[i] + truth[2] * b[i]);
            if gen.random::<f64>() < p { 1.0 } else { 0.0 }
        })
        .collect();
    let x = DesignMatrix::with_intercept(n, &[("a".into(), a), ("b".into(), b)]).unwrap();
    let fit = fit_logistic_weighted(&x, &z, &vec![1.0; n]).unwrap();
    assert!(fit.converged);
    assert!(fit.max_abs_score < 1e-8);
    for k in 0..3 {
        let se = fit.cov.get(k, k).sqrt();
        assert!((fit.gamma[k] - truth[k]).abs() < 4.0 * se, "{k}: {} vs {}", fit.gamma[k], truth[k]);
    }
}

#[test]
fn fits_are_invariant_to_row_order() {
    let (x, z, y, w) = fixture();
    let n = y.len();
    let perm: Vec<usize> = (0..n).map(|i| (i * 17 + 5) % n).collect();
    let xp = DesignMatrix::from_parts(x.matrix().select_rows(&perm), x.labels().to_vec()).unwrap();
    let pick = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let a = fit_logistic_weighted(&x, &z, &w).unwrap();
    let b = fit_logistic_weighted(&xp, &pick(&z), &pick(&w)).unwrap();
    close(&a.gamma, &b.gamma, 1e-10);
    let a = fit_linear_weighted(&x, &y, &w).unwrap();
    let b = fit_linear_weighted(&xp, &pick(&y), &pick(&w)).unwrap();
    close(&a.phi, &b.phi, 1e-10);
    assert!((a.sigma2 - b.sigma2).abs() < 1e-12);
}

#[test]
fn estimated_propensity_reduces_sandwich_variance_on_average() {
    let reps = 100;
    let mut adj = 0.0;
    let mut raw = 0.0;
    for r in 0..reps {
        let data = generate_data(5000, &RngStream::new(77, r)).unwrap();
        let spec = apply_scenario(&data, Scenario::I).unwrap();
        let s = or_ps(&data, &spec).unwrap().sandwich.unwrap();
        adj += s.adjusted;
        raw += s.unadjusted;
    }
    assert!(adj <= raw, "mean adjusted {} > mean unadjusted {}", adj / reps as f64, raw / reps as f64);
}

#[test]
fn indicator_regression_gives_group_means() {
    // group means 2 and 12, residuals ±1 and ±2, so sigma2 = 10 / 4
    let y = [1.0, 3.0, 10.0, 14.0];
    let m = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let x = DesignMatrix::from_parts(m, vec!["(intercept)".into(), "g".into()]).unwrap();
    let fit = fit_linear_weighted(&x, &y, &[1.0; 4]).unwrap();
    close(&fit.phi, &[2.0, 10.0], 1e-12);
    assert!((fit.sigma2 - 2.5).abs() < 1e-12);
}
