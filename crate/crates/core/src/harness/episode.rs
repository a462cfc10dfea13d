use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

use super::config::{stream_rng, streams, Estimation, RegretMode, RunConfig};
use super::trace::{AggregateResult, RegretTrace, StepRecord};
use crate::empirical_bayes::{refit_prior, EmpiricalBayesConfig};
use crate::environment::EnvTruth;
use crate::error::{EbmError, Result};
use crate::policies::{
    exploration_scale, forced_initialization, select_baseline, select_ebm_ts, select_ebm_ucb, select_oracle, Decision,
    PolicyConfig, PolicyKind,
};
use crate::posterior::{ArmEngine, ArmPrior, SufficientStats};

enum Learner {
    Hierarchical(Vec<ArmEngine>),
    /// `stats[j][k]`
    Independent(Vec<Vec<SufficientStats>>),
    Oracle,
}

/// Learning state of one policy inside one episode.
pub struct Agent<'a> {
    env: &'a EnvTruth,
    policy: PolicyConfig,
    estimation: Estimation,
    eb: EmpiricalBayesConfig,
    learner: Learner,
    /// `counts[j][k]`
    counts: Vec<Vec<u64>>,
}

impl<'a> Agent<'a> {
    pub fn new(env: &'a EnvTruth, config: &RunConfig) -> Result<Self> {
        let policy = config.policy.clone();
        let learner = match policy.kind {
            PolicyKind::EbmTs | PolicyKind::EbmUcb => {
                let engines = (0..env.n_arms)
                    .map(|k| {
                        let prior = match config.estimation {
                            Estimation::EmpiricalBayes => ArmPrior::isotropic(env.dim, 1.0, 1.0, policy.lambda)?,
                            Estimation::FixedPrior => {
                                let s2 = (env.noise_sd[k] * env.noise_sd[k]).max(config.empirical_bayes.noise_floor);
                                ArmPrior::new(s2, env.sigma_prior[k].clone(), policy.lambda)?
                            }
                        };
                        ArmEngine::new(env.n_instances, prior)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Learner::Hierarchical(engines)
            }
            PolicyKind::LinTs | PolicyKind::LinUcb | PolicyKind::OlsGreedy => {
                Learner::Independent(vec![vec![SufficientStats::new(env.dim); env.n_arms]; env.n_instances])
            }
            PolicyKind::Oracle => Learner::Oracle,
        };
        Ok(Agent {
            env,
            policy,
            estimation: config.estimation,
            eb: config.empirical_bayes.clone(),
            learner,
            counts: vec![vec![0; env.n_arms]; env.n_instances],
        })
    }

    pub fn pull_counts(&self, instance: usize) -> &[u64] {
        &self.counts[instance]
    }

    /// Current prior of each arm (hierarchical policies only).
    pub fn priors(&self) -> Option<Vec<ArmPrior>> {
        match &self.learner {
            Learner::Hierarchical(engines) => Some(engines.iter().map(|e| e.prior().clone()).collect()),
            _ => None,
        }
    }

    pub fn engines(&self) -> Option<&[ArmEngine]> {
        match &self.learner {
            Learner::Hierarchical(engines) => Some(engines),
            _ => None,
        }
    }

    /// Choose an arm for `instance` at global step `t` (1-based).
    pub fn decide<R: Rng + ?Sized>(&self, instance: usize, x: &DVector<f64>, t: u64, rng: &mut R) -> Result<Decision> {
        if let Learner::Oracle = self.learner {
            return select_oracle(&self.env.beta[instance], x);
        }
        if let Some(arm) = forced_initialization(self.policy.min_pulls_per_arm, &self.counts[instance]) {
            return Ok(Decision::forced(arm, self.env.n_arms));
        }
        let alpha = exploration_scale(t, self.policy.a)?;
        match &self.learner {
            Learner::Hierarchical(engines) => {
                let posteriors = engines
                    .iter()
                    .map(|e| e.marginal(instance))
                    .collect::<Result<Vec<_>>>()?;
                match self.policy.kind {
                    PolicyKind::EbmUcb => select_ebm_ucb(&posteriors, x, alpha),
                    _ => select_ebm_ts(&posteriors, x, alpha, rng),
                }
            }
            Learner::Independent(stats) => {
                let own: Vec<&SufficientStats> = stats[instance].iter().collect();
                select_baseline(self.policy.kind, &own, x, alpha, self.policy.lambda, rng)
            }
            Learner::Oracle => unreachable!(),
        }
    }

    /// Record a reward and, for the hierarchical policies under empirical
    /// Bayes, refresh the pulled arm's hyperparameters.
    pub fn update(&mut self, instance: usize, arm: usize, x: &DVector<f64>, y: f64) -> Result<()> {
        self.counts[instance][arm] += 1;
        match &mut self.learner {
            Learner::Hierarchical(engines) => {
                engines[arm].observe(instance, x, y)?;
                if self.estimation == Estimation::EmpiricalBayes {
                    refit_prior(&mut engines[arm], &self.eb)?;
                }
            }
            Learner::Independent(stats) => stats[instance][arm].observe(x, y)?,
            Learner::Oracle => {}
        }
        Ok(())
    }
}

fn regret_of(env: &EnvTruth, instance: usize, arm: usize, x: &DVector<f64>) -> (usize, f64) {
    let best = env.optimal_arm(instance, x);
    let r = env.expected_reward(instance, best, x) - env.expected_reward(instance, arm, x);
    (best, r)
}

fn run(env: &EnvTruth, config: &RunConfig, seed: u64, mode: RegretMode) -> Result<RegretTrace> {
    config.validate()?;
    let mut agent = Agent::new(env, config)?;
    let mut arrival_rng = stream_rng(seed, streams::ARRIVAL);
    let mut context_rng = stream_rng(seed, streams::CONTEXT);
    let mut reward_rng = stream_rng(seed, streams::REWARD);
    let mut policy_rng = stream_rng(seed, streams::POLICY);
    let mut trace = RegretTrace::new(seed, mode, env.n_instances, config.horizon);

    for t in 1..=config.horizon {
        let step = |e: EbmError| EbmError::Episode {
            step: t,
            source: Box::new(e),
        };
        let instance = env.sample_arrival(&mut arrival_rng);
        let x = env.sample_context(&mut context_rng);
        trace.x_max = trace.x_max.max(x.norm());

        let (decision, optimal_arm, regret, shares) = match mode {
            RegretMode::Realized => {
                let d = agent.decide(instance, &x, t as u64, &mut policy_rng).map_err(step)?;
                let (best, r) = regret_of(env, instance, d.arm, &x);
                (d, best, r, vec![(instance, r)])
            }
            RegretMode::Weighted => {
                let mut realized = None;
                let mut total = 0.0;
                let mut shares = Vec::with_capacity(env.n_instances);
                for j in 0..env.n_instances {
                    let d = agent.decide(j, &x, t as u64, &mut policy_rng).map_err(step)?;
                    let (best, r) = regret_of(env, j, d.arm, &x);
                    let w = env.arrival[j] * r;
                    total += w;
                    shares.push((j, w));
                    if j == instance {
                        realized = Some((d, best));
                    }
                }
                let (d, best) = realized.expect("realized instance is in range");
                (d, best, total, shares)
            }
        };

        let y = env.sample_reward(instance, decision.arm, &x, &mut reward_rng);
        agent.update(instance, decision.arm, &x, y).map_err(step)?;
        trace.push(
            StepRecord {
                t,
                instance,
                arm: decision.arm,
                optimal_arm,
                regret,
                forced: decision.forced,
            },
            &shares,
        );
    }
    Ok(trace)
}

/// Play one episode and record realized regret (or weighted regret when the
/// config asks for it).
pub fn run_episode(env: &EnvTruth, config: &RunConfig, seed: u64) -> Result<RegretTrace> {
    run(env, config, seed, config.regret_mode)
}

/// Play one episode scoring every step by arrival-weighted counterfactual
/// regret; only the realized instance learns.
pub fn weighted_regret_trace(env: &EnvTruth, config: &RunConfig, seed: u64) -> Result<RegretTrace> {
    run(env, config, seed, RegretMode::Weighted)
}

/// Run every seed of `config` (in parallel) and summarize.
pub fn run_replications(config: &RunConfig) -> Result<AggregateResult> {
    config.validate()?;
    let traces = config
        .seeds
        .par_iter()
        .map(|&seed| {
            config
                .env
                .resolve(seed)
                .and_then(|env| run_episode(&env, config, seed))
                .map_err(|e| EbmError::Replication {
                    seed,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AggregateResult::from_traces(traces))
}
