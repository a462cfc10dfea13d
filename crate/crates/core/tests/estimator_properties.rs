mod common;

use common::*;
use ebm_core::empirical_bayes::{
    estimate_covariance, ols_estimate, sample_covariance, select_threshold, threshold_covariance, EmpiricalBayesConfig,
    OlsEstimate,
};
use ebm_core::linalg::min_eigenvalue;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn random_symmetric<R: Rng>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let a = normal_mat(d, d, rng);
    (&a + a.transpose()) * 0.5
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn thresholding_is_idempotent(seed in any::<u64>(), d in 1usize..6, gamma in 0.0f64..0.6) {
        let mut r = rng(seed);
        let s = random_spd(d, 0.5, &mut r);
        let once = threshold_covariance(&s, gamma, 1e-4).unwrap();
        // eigenvalue repair refills zeroed entries, so only the masking step is idempotent
        prop_assume!(!once.repaired);
        let twice = threshold_covariance(&once.sigma_hat, gamma, 1e-4).unwrap();
        prop_assert!(max_abs(&once.sigma_hat, &twice.sigma_hat) < 1e-12);
    }

    #[test]
    fn larger_threshold_keeps_fewer_entries(seed in any::<u64>(), d in 1usize..6, g1 in 0.0f64..1.0, extra in 0.0f64..1.0) {
        let mut r = rng(seed);
        let s = random_symmetric(d, &mut r);
        let g2 = g1 + extra;
        let kept = |g: f64| s.map(|v| v.abs() >= g);
        let (k1, k2) = (kept(g1), kept(g2));
        for (a, b) in k1.iter().zip(k2.iter()) {
            prop_assert!(!*b || *a);
        }
        // with no repair the estimate is exactly the masked matrix
        let est = threshold_covariance(&s, g2, 1e-300).unwrap();
        if !est.repaired {
            for (v, keep) in est.sigma_hat.iter().zip(k2.iter()) {
                prop_assert!(*keep || *v == 0.0);
            }
        }
    }

    #[test]
    fn estimate_is_invertible(seed in any::<u64>(), d in 1usize..5, gamma in 0.0f64..3.0) {
        let mut r = rng(seed);
        let s = random_symmetric(d, &mut r);
        let est = threshold_covariance(&s, gamma, 1e-4).unwrap();
        prop_assert!(max_abs(&est.sigma_hat, &est.sigma_hat.transpose()) < 1e-12);
        prop_assert!(min_eigenvalue(&est.sigma_hat) >= 1e-4 * (1.0 - 1e-9));
        prop_assert!(est.gamma >= 0.0);
    }

    #[test]
    fn ols_matches_normal_equations(seed in any::<u64>(), d in 1usize..4) {
        let mut r = rng(seed);
        let s = random_sample(30, d, &mut r);
        let xtx = s.x.transpose() * &s.x;
        let batch = lu_inverse(&xtx) * (s.x.transpose() * &s.y);
        match ols_estimate(&s.stats, 0.0) {
            OlsEstimate::Ols(b) => prop_assert!(max_abs_vec(&b, &batch) < 1e-8),
            other => prop_assert!(false, "expected OLS, got {:?}", other),
        }
    }

    #[test]
    fn sample_covariance_is_textbook(seed in any::<u64>(), n in 2usize..12, d in 1usize..4) {
        let mut r = rng(seed);
        let vs: Vec<DVector<f64>> = (0..n).map(|_| normal_vec(d, &mut r)).collect();
        let s = sample_covariance(&vs).unwrap();
        for a in 0..d {
            for b in 0..d {
                let ma = vs.iter().map(|v| v[a]).sum::<f64>() / n as f64;
                let mb = vs.iter().map(|v| v[b]).sum::<f64>() / n as f64;
                let c = vs.iter().map(|v| (v[a] - ma) * (v[b] - mb)).sum::<f64>() / (n - 1) as f64;
                prop_assert!((s[(a, b)] - c).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn cold_start_waits_for_two_proper_fits() {
    let d = 2;
    let cfg = EmpiricalBayesConfig::default();
    let mut r = rng(3);
    let full = random_sample(10, d, &mut r).stats;
    let thin = random_sample(1, d, &mut r).stats;
    assert!(estimate_covariance(&[full.clone(), thin.clone()], &cfg)
        .unwrap()
        .is_none());
    let est = estimate_covariance(&[full.clone(), thin, full], &cfg).unwrap().unwrap();
    assert_eq!(est.n_contributing, 2);
}

#[test]
fn threshold_rate_on_integer_dimension() {
    let s = DMatrix::from_diagonal(&DVector::from_row_slice(&[2.0, 1.0, 0.5, 0.25]));
    let g = select_threshold(&s, 16, 0.5).unwrap();
    assert!((g - 0.5 * 2.0 * (4f64.ln() / 16.0).sqrt()).abs() < 1e-15);
}
