mod common;

use common::*;
use ebm_core::environment::{generate_hierarchical_env, ArrivalMode, ContextDistribution};
use ebm_core::harness::trace::mean_sd;
use ebm_core::harness::{
    run_episode, run_replications, theoretical_bound_ucb, weighted_regret_trace, Agent, BoundParams, EnvSource,
    Estimation, RegretMode, RunConfig,
};
use ebm_core::policies::PolicyKind;
use proptest::prelude::*;

fn small_config(kind: PolicyKind, horizon: usize, seeds: Vec<u64>) -> RunConfig {
    let mut c = RunConfig::synthetic(kind, ArrivalMode::Balanced);
    c.env = EnvSource::Hierarchical {
        n_instances: 3,
        n_arms: 3,
        dim: 2,
        arrival: ArrivalMode::Balanced,
        context: ContextDistribution::mixture(),
        env_seed: None,
    };
    c.horizon = horizon;
    c.seeds = seeds;
    c
}

fn kind() -> impl Strategy<Value = PolicyKind> {
    prop_oneof![
        Just(PolicyKind::EbmTs),
        Just(PolicyKind::EbmUcb),
        Just(PolicyKind::LinTs),
        Just(PolicyKind::LinUcb),
        Just(PolicyKind::OlsGreedy),
    ]
}

/// The bound written out term by term, straight from its definition.
fn reference_bound(p: &BoundParams) -> f64 {
    let (s, l, l1, ld, x, b) = (p.sigma, p.lambda, p.lambda_1, p.lambda_d, p.x_max, p.b_max);
    let (d, k, n, big_n) = (p.dim as f64, p.n_arms as f64, p.n, p.n_j.len() as f64);
    let c1 = (x * x / ld) / (1.0 + x * x / (s * s * ld)).ln();
    let c2 = x * x / (s * s * d * ld);
    let c3 = (l1 * l1 * x * x / (ld * ld * l)) * (1.0 + x * x / (s * s * ld))
        / (1.0 + l1 * l1 * x * x / (s * s * ld * ld * l)).ln();
    let c4 = l1 / l;
    let inner = ((l.max(s * s * l1) + n * x * x / d) / ((l * ld * s * s).sqrt() * p.delta)).ln();
    let alpha = s * big_n * b * l1.sqrt() + 2.0 * (s * s * d * (l1 / l).max(1.0) * inner).sqrt();
    let sum_j: f64 = p.n_j.iter().map(|nj| (1.0 + c2 * nj).ln()).sum();
    2.0 * alpha * (c1 * n * d * k * sum_j + c3 * n * d * k * (1.0 + c4 * big_n).ln()).sqrt()
        + 2.0 * x * b * k * big_n * n * p.delta
}

fn params(n: f64, n_j: Vec<f64>) -> BoundParams {
    BoundParams {
        sigma: 1.0,
        lambda: 0.001,
        lambda_1: 1.0,
        lambda_d: 0.1,
        x_max: 4.0,
        b_max: 3.0,
        dim: 3,
        n_arms: 5,
        n,
        n_j,
        delta: 0.05,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn traces_keep_their_invariants(seed in any::<u64>(), kind in kind(), weighted in any::<bool>()) {
        let mut c = small_config(kind, 80, vec![seed]);
        if weighted {
            c.regret_mode = RegretMode::Weighted;
        }
        let env = c.env.resolve(seed).unwrap();
        let tr = run_episode(&env, &c, seed).unwrap();
        let mut acc = 0.0;
        for (s, cum) in tr.steps.iter().zip(&tr.cumulative) {
            prop_assert!(s.regret >= 0.0);
            acc += s.regret;
            prop_assert!((acc - cum).abs() < 1e-9);
        }
        for (row, cum) in tr.per_instance_cumulative.iter().zip(&tr.cumulative) {
            prop_assert!((row.iter().sum::<f64>() - cum).abs() < 1e-9);
        }
        prop_assert_eq!(&tr, &run_episode(&env, &c, seed).unwrap());
    }

    #[test]
    fn bound_matches_reference(n in 1.0f64..5000.0, shares in prop::collection::vec(0.0f64..1.0, 1..12), sigma in 0.2f64..3.0, ld in 0.01f64..1.0) {
        let total: f64 = shares.iter().sum::<f64>().max(1e-9);
        let mut p = params(n, shares.iter().map(|s| s / total * n).collect());
        p.sigma = sigma;
        p.lambda_d = ld;
        let ours = theoretical_bound_ucb(&p).unwrap();
        let reference = reference_bound(&p);
        prop_assert!((ours - reference).abs() <= 1e-10 * reference.abs());
    }
}

#[test]
fn bound_at_unit_constants() {
    let e = std::f64::consts::E;
    let mut p = params(e - 1.0, vec![e - 1.0]);
    p.lambda = 1.0;
    p.lambda_1 = 1.0;
    p.lambda_d = 1.0;
    p.x_max = 1.0;
    p.b_max = 1.0;
    p.dim = 1;
    p.n_arms = 1;
    p.delta = 0.1;
    let c = p.constants();
    let l2 = 2f64.ln();
    assert!((c.c1 - 1.0 / l2).abs() < 1e-12);
    assert_eq!(c.c2, 1.0);
    assert!((c.c3 - 2.0 / l2).abs() < 1e-12);
    assert_eq!(c.c4, 1.0);
    // c₂·n₁ = e − 1, so log(1 + c₂n₁) = 1
    let n = e - 1.0;
    let alpha = 1.0 + 2.0 * ((1.0 + n) / 0.1f64).ln().sqrt();
    let expected = 2.0 * alpha * (n / l2 + 2.0 * n).sqrt() + 2.0 * n * 0.1;
    assert!((theoretical_bound_ucb(&p).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn bound_is_monotone_in_horizon_and_instances() {
    for n in [10.0, 100.0, 1000.0, 10000.0] {
        for n_inst in [1usize, 2, 5, 10] {
            let share = n / n_inst as f64;
            let base = theoretical_bound_ucb(&params(n, vec![share; n_inst])).unwrap();
            let doubled = theoretical_bound_ucb(&params(2.0 * n, vec![2.0 * share; n_inst])).unwrap();
            assert!(doubled >= base);
            let wider = theoretical_bound_ucb(&params(n, vec![share; n_inst + 1])).unwrap();
            assert!(wider >= base);
        }
    }
    let p = params(1.0, vec![0.0, 0.0]);
    let zero_instance = theoretical_bound_ucb(&p).unwrap();
    assert!(zero_instance > 2.0 * p.x_max * p.b_max * 5.0 * 2.0 * p.delta);
}

#[test]
fn single_seed_aggregate_is_that_trace() {
    let c = small_config(PolicyKind::EbmUcb, 60, vec![4]);
    let agg = run_replications(&c).unwrap();
    let env = c.env.resolve(4).unwrap();
    let tr = run_episode(&env, &c, 4).unwrap();
    assert_eq!(agg.total.mean, tr.cumulative);
    assert!(agg.total.sd.iter().all(|&s| s == 0.0));
    assert_eq!(agg.total.q10, tr.cumulative);
}

#[test]
fn duplicated_seeds_have_zero_spread() {
    let c = small_config(PolicyKind::EbmTs, 60, vec![9, 9]);
    let agg = run_replications(&c).unwrap();
    assert!(agg.total.sd.iter().all(|&s| s == 0.0));
    assert!(agg.per_instance.iter().all(|p| p.sd.iter().all(|&s| s == 0.0)));
}

#[test]
fn replication_order_does_not_matter() {
    let a = run_replications(&small_config(PolicyKind::LinTs, 50, vec![1, 2, 3])).unwrap();
    let b = run_replications(&small_config(PolicyKind::LinTs, 50, vec![3, 1, 2])).unwrap();
    let mut fa = a.final_regrets();
    let mut fb = b.final_regrets();
    fa.sort_by(f64::total_cmp);
    fb.sort_by(f64::total_cmp);
    assert_eq!(fa, fb);
    let ma = mean_sd(&a.final_regrets()).0;
    let mb = mean_sd(&b.final_regrets()).0;
    assert!((ma - mb).abs() < 1e-9);
}

#[test]
fn weighted_regret_is_symmetric_for_mirrored_instances() {
    let mut env = generate_hierarchical_env(
        2,
        3,
        2,
        ArrivalMode::Balanced,
        ContextDistribution::mixture(),
        &mut rng(1),
    )
    .unwrap();
    env.beta[1] = env.beta[0].clone();
    for kind in [PolicyKind::EbmUcb, PolicyKind::LinUcb] {
        let c = small_config(kind, 1, vec![0]);
        let mut agent = Agent::new(&env, &c).unwrap();
        let mut r = rng(2);
        let (mut w0, mut w1) = (0.0, 0.0);
        for t in 1..=120u64 {
            let x = env.sample_context(&mut r);
            let d0 = agent.decide(0, &x, t, &mut r).unwrap();
            let d1 = agent.decide(1, &x, t, &mut r).unwrap();
            let regret = |j: usize, arm: usize| {
                env.expected_reward(j, env.optimal_arm(j, &x), &x) - env.expected_reward(j, arm, &x)
            };
            w0 += env.arrival[0] * regret(0, d0.arm);
            w1 += env.arrival[1] * regret(1, d1.arm);
            // mirrored data: both instances see the same pull and reward
            let y = env.sample_reward(0, d0.arm, &x, &mut r);
            agent.update(0, d0.arm, &x, y).unwrap();
            agent.update(1, d0.arm, &x, y).unwrap();
        }
        assert!((w0 - w1).abs() < 1e-9, "{kind}: {w0} vs {w1}");
    }
}

#[test]
fn weighted_mode_records_arrival_shares() {
    let c = small_config(PolicyKind::EbmUcb, 100, vec![3]);
    let env = c.env.resolve(3).unwrap();
    let tr = weighted_regret_trace(&env, &c, 3).unwrap();
    assert_eq!(tr.mode, RegretMode::Weighted);
    let last = tr.per_instance_cumulative.last().unwrap();
    assert!((last.iter().sum::<f64>() - tr.final_regret()).abs() < 1e-9);
}

#[test]
fn injected_prior_does_not_add_regret_on_average() {
    let mut eb = RunConfig::synthetic(PolicyKind::EbmUcb, ArrivalMode::Balanced);
    eb.seeds = (0..50).collect();
    eb.horizon = 1000;
    let mut fixed = eb.clone();
    fixed.estimation = Estimation::FixedPrior;
    let eb_mean = mean_sd(&run_replications(&eb).unwrap().final_regrets()).0;
    let fixed_mean = mean_sd(&run_replications(&fixed).unwrap().final_regrets()).0;
    assert!(fixed_mean <= eb_mean, "fixed {fixed_mean} vs empirical {eb_mean}");
}
