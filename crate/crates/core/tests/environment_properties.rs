mod common;

use common::*;
use ebm_core::environment::{
    generate_hierarchical_env, generate_sparse_env, sample_arrival, ArrivalMode, ContextDistribution, EnvTruth,
};
use ebm_core::linalg::min_eigenvalue;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn arrival_mode() -> impl Strategy<Value = ArrivalMode> {
    prop_oneof![Just(ArrivalMode::Balanced), Just(ArrivalMode::DataPoor)]
}

fn context() -> impl Strategy<Value = ContextDistribution> {
    prop_oneof![
        Just(ContextDistribution::mixture()),
        Just(ContextDistribution::uniform())
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_envs_satisfy_invariants(
        seed in any::<u64>(), n in 1usize..8, k in 1usize..5, d in 1usize..5,
        arrival in arrival_mode(), ctx in context(),
    ) {
        let env = generate_hierarchical_env(n, k, d, arrival, ctx, &mut rng(seed)).unwrap();
        prop_assert!((env.arrival.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(env.arrival.iter().all(|&p| p >= 0.0));
        for s in &env.sigma_prior {
            prop_assert!(max_abs(s, &s.transpose()) == 0.0);
            prop_assert!(min_eigenvalue(s) >= 1.0 - 1e-12);
        }
        prop_assert!(env.validate().is_ok());
    }

    #[test]
    fn env_files_round_trip_bit_exactly(
        seed in any::<u64>(), n in 1usize..5, k in 1usize..4, d in 1usize..4,
        sparse in any::<bool>(), ctx in context(),
    ) {
        let env = if sparse {
            generate_sparse_env(n, k, d, d.min(2), 0.7, ArrivalMode::DataPoor, ctx, &mut rng(seed)).unwrap()
        } else {
            generate_hierarchical_env(n, k, d, ArrivalMode::Balanced, ctx, &mut rng(seed)).unwrap()
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("env.json");
        env.write(&path).unwrap();
        let back = EnvTruth::read(&path).unwrap();
        prop_assert_eq!(&back, &env);
        for (a, b) in back.beta.iter().flatten().zip(env.beta.iter().flatten()) {
            for (u, v) in a.iter().zip(b.iter()) {
                prop_assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn sparse_deviations_have_exact_support(seed in any::<u64>(), d in 1usize..6, s in 0usize..6) {
        prop_assume!(s <= d);
        let env = generate_sparse_env(4, 2, d, s, 1.0, ArrivalMode::Balanced, ContextDistribution::mixture(), &mut rng(seed)).unwrap();
        for j in 0..4 {
            for k in 0..2 {
                let nonzero = (&env.beta[j][k] - &env.beta0[k]).iter().filter(|v| **v != 0.0).count();
                prop_assert_eq!(nonzero, s);
            }
        }
    }
}

#[test]
fn sparse_support_beyond_dimension_is_rejected() {
    assert!(generate_sparse_env(
        2,
        2,
        3,
        4,
        1.0,
        ArrivalMode::Balanced,
        ContextDistribution::mixture(),
        &mut rng(0)
    )
    .is_err());
}

#[test]
fn mixture_context_moments() {
    let mut r = rng(1);
    let dist = ContextDistribution::mixture();
    let draws = 1_000_000;
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..draws {
        let v = dist.sample(1, &mut r)[0];
        sum += v;
        sum2 += v * v;
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = sum2 / n - mean * mean;
    // per-draw variance 2, fourth central moment 0.5·2·(3+6+1)=10
    let se_mean = (2.0 / n).sqrt();
    let se_var = ((10.0 - 4.0) / n).sqrt();
    assert!(mean.abs() < 3.0 * se_mean, "mean {mean}");
    assert!((var - 2.0).abs() < 3.0 * se_var, "var {var}");
}

#[test]
fn arrival_frequencies_follow_probabilities() {
    let mut r = rng(2);
    let probs = ArrivalMode::DataPoor.probabilities(4);
    let draws = 100_000;
    let mut counts = [0usize; 4];
    for _ in 0..draws {
        counts[sample_arrival(&probs, &mut r)] += 1;
    }
    for (c, p) in counts.iter().zip(&probs) {
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((*c as f64 / draws as f64 - p).abs() < 3.0 * se, "{c} vs {p}");
    }
    let half = [0.5, 0.5];
    let zeros = (0..draws).filter(|_| sample_arrival(&half, &mut r) == 0).count();
    let f = zeros as f64 / draws as f64;
    assert!((0.49..=0.51).contains(&f));
}

#[test]
fn reward_noise_variance_at_zero_context() {
    let env = generate_hierarchical_env(
        1,
        1,
        2,
        ArrivalMode::Balanced,
        ContextDistribution::mixture(),
        &mut rng(3),
    )
    .unwrap();
    let mut r = rng(4);
    let x = DVector::zeros(2);
    let draws = 100_000;
    let ys: Vec<f64> = (0..draws).map(|_| env.sample_reward(0, 0, &x, &mut r)).collect();
    let mean = ys.iter().sum::<f64>() / draws as f64;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
    assert!((0.94..=1.06).contains(&var), "{var}");
}

#[test]
fn regression_on_rewards_recovers_parameters() {
    let env = generate_hierarchical_env(
        2,
        2,
        3,
        ArrivalMode::Balanced,
        ContextDistribution::mixture(),
        &mut rng(6),
    )
    .unwrap();
    let mut r = rng(7);
    let t = 10_000;
    let (j, k) = (1, 0);
    let mut x = DMatrix::zeros(t, 3);
    let mut y = DVector::zeros(t);
    for i in 0..t {
        let xi = env.sample_context(&mut r);
        y[i] = env.sample_reward(j, k, &xi, &mut r);
        x.set_row(i, &xi.transpose());
    }
    let xtx_inv = lu_inverse(&(x.transpose() * &x));
    let beta = &xtx_inv * x.transpose() * &y;
    let s2 = (&y - &x * &beta).norm_squared() / (t - 3) as f64;
    for c in 0..3 {
        let se = (s2 * xtx_inv[(c, c)]).sqrt();
        assert!((beta[c] - env.beta[j][k][c]).abs() < 3.0 * se, "coordinate {c}");
    }
}
