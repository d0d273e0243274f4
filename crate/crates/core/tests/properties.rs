use causal_dr_core::estimators::{estimate, Method, ResamplingConfig};
use causal_dr_core::glm::{fit_linear_weighted, fit_logistic_weighted, DesignMatrix};
use causal_dr_core::numerics::{sample_dirichlet, Matrix};
use causal_dr_core::simulation::{apply_scenario, generate_data};
use causal_dr_core::{CovariateSpec, Dataset, RngStream, Scenario};
use proptest::prelude::*;

fn design(cols: &[Vec<f64>]) -> DesignMatrix {
    let n = cols[0].len();
    let named: Vec<(String, Vec<f64>)> = cols.iter().enumerate().map(|(j, c)| (format!("v{j}"), c.clone())).collect();
    DesignMatrix::with_intercept(n, &named).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn weight_scale_does_not_change_fits(seed in 0u64..10_000, scale in 0.01f64..100.0) {
        let data = generate_data(80, &RngStream::new(seed, 0)).unwrap();
        let x = design(&[data.x().column(0), data.x().column(1)]);
        let mut gen = RngStream::new(seed, 1).generator();
        let w = sample_dirichlet(80, &mut gen).unwrap().into_weights();
        let ws: Vec<f64> = w.iter().map(|v| v * scale).collect();

        let a = fit_linear_weighted(&x, data.y(), &w).unwrap();
        let b = fit_linear_weighted(&x, data.y(), &ws).unwrap();
        for (u, v) in a.phi.iter().zip(&b.phi) {
            prop_assert!((u - v).abs() < 1e-9);
        }
        prop_assert!((a.sigma2 - b.sigma2).abs() < 1e-9 * (1.0 + a.sigma2));

        let a = fit_logistic_weighted(&x, data.z(), &w).unwrap();
        let b = fit_logistic_weighted(&x, data.z(), &ws).unwrap();
        for (u, v) in a.gamma.iter().zip(&b.gamma) {
            prop_assert!((u - v).abs() < 1e-7);
        }
        for k in 0..3 {
            prop_assert!((a.cov.get(k, k) - b.cov.get(k, k)).abs() < 1e-7 * (1.0 + a.cov.get(k, k)));
        }
    }

    #[test]
    fn shifting_the_outcome_leaves_contrasts_unchanged(seed in 0u64..10_000, shift in -50.0f64..50.0) {
        let data = generate_data(150, &RngStream::new(seed, 2)).unwrap();
        let spec = apply_scenario(&data, Scenario::I).unwrap();
        let shifted = data.with_outcome(data.y().iter().map(|y| y + shift).collect()).unwrap();
        let cfg = ResamplingConfig { n_draws: 4, n_boot: 4, stabilize: true };
        let rng = RngStream::new(seed, 3);
        for m in [Method::Naive, Method::Adjusted, Method::OrPsObserved, Method::Dr, Method::OrIptw, Method::ImportanceSamplingDr] {
            let a = estimate(m, &data, &spec, &cfg, &rng).unwrap();
            let b = estimate(m, &shifted, &spec, &cfg, &rng).unwrap();
            prop_assert!((a.point - b.point).abs() < 1e-8, "{}: {} vs {}", m, a.point, b.point);
        }
    }

    #[test]
    fn naive_matches_arm_means(ys in prop::collection::vec(-100.0f64..100.0, 4..40)) {
        let n = ys.len();
        let z: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let data = Dataset::new(ys.clone(), z.clone(), Matrix::zeros(n, 0), vec![]).unwrap();
        let cfg = ResamplingConfig { n_draws: 2, n_boot: 3, stabilize: true };
        let r = estimate(Method::Naive, &data, &CovariateSpec::default(), &cfg, &RngStream::new(0, 0)).unwrap();
        let arm = |t: f64| {
            let v: Vec<f64> = ys.iter().zip(&z).filter(|(_, z)| **z == t).map(|(y, _)| *y).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        prop_assert!((r.point - (arm(1.0) - arm(0.0))).abs() < 1e-9);
    }
}
