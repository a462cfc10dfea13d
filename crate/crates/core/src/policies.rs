//! Arm-selection rules.
//!
//! The hierarchical policies score arms from marginal posteriors; the
//! baselines run one independent ridge regression per (arm, instance).
//! Every rule resolves ties towards the lowest arm index.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{EbmError, Result};
use crate::linalg::{psd_factor, spd_inverse};
use crate::posterior::{GaussianPosterior, SufficientStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum PolicyKind {
    #[serde(rename = "ebmTS")]
    EbmTs,
    #[serde(rename = "ebmUCB")]
    EbmUcb,
    #[serde(rename = "LinTS")]
    LinTs,
    #[serde(rename = "LinUCB")]
    LinUcb,
    #[serde(rename = "ols_greedy")]
    OlsGreedy,
    #[serde(rename = "oracle")]
    Oracle,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::EbmTs,
        PolicyKind::EbmUcb,
        PolicyKind::LinTs,
        PolicyKind::LinUcb,
        PolicyKind::OlsGreedy,
        PolicyKind::Oracle,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::EbmTs => "ebmTS",
            PolicyKind::EbmUcb => "ebmUCB",
            PolicyKind::LinTs => "LinTS",
            PolicyKind::LinUcb => "LinUCB",
            PolicyKind::OlsGreedy => "ols_greedy",
            PolicyKind::Oracle => "oracle",
        }
    }

    pub fn is_hierarchical(self) -> bool {
        matches!(self, PolicyKind::EbmTs | PolicyKind::EbmUcb)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PolicyKind {
    type Err = EbmError;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
            .or_else(|| match s.to_ascii_lowercase().as_str() {
                "olsgreedy" | "ols-greedy" => Some(PolicyKind::OlsGreedy),
                _ => None,
            })
            .ok_or_else(|| EbmError::invalid(format!("unknown policy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Exploration multiplier in `α_t = a·sqrt(ln t)`.
    #[serde(default = "PolicyConfig::default_a")]
    pub a: f64,
    /// Ridge precision (shared-mean prior precision for the hierarchical policies).
    #[serde(default = "PolicyConfig::default_lambda")]
    pub lambda: f64,
    /// Pulls of every arm each instance must see before model-based scoring.
    #[serde(default = "PolicyConfig::default_min_pulls")]
    pub min_pulls_per_arm: u64,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl PolicyConfig {
    fn default_a() -> f64 {
        0.1
    }

    fn default_lambda() -> f64 {
        0.001
    }

    fn default_min_pulls() -> u64 {
        1
    }

    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            a: Self::default_a(),
            lambda: Self::default_lambda(),
            min_pulls_per_arm: Self::default_min_pulls(),
            tie_break: TieBreak::LowestIndex,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(EbmError::document("policy.a", "must be positive"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(EbmError::document("policy.lambda", "must be positive"));
        }
        Ok(())
    }
}

/// Outcome of one selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub arm: usize,
    pub scores: Vec<f64>,
    pub mu: Vec<f64>,
    pub tau: Vec<f64>,
    /// Chosen by forced initialization rather than by score.
    pub forced: bool,
}

impl Decision {
    fn from_scores(scores: Vec<f64>, mu: Vec<f64>, tau: Vec<f64>) -> Self {
        Decision {
            arm: argmax_lowest(&scores),
            scores,
            mu,
            tau,
            forced: false,
        }
    }

    pub fn forced(arm: usize, n_arms: usize) -> Self {
        Decision {
            arm,
            scores: vec![0.0; n_arms],
            mu: vec![0.0; n_arms],
            tau: vec![0.0; n_arms],
            forced: true,
        }
    }
}

/// Index of the first maximum.
pub fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

/// `α_t = a·sqrt(ln t)`.
pub fn exploration_scale(t: u64, a: f64) -> Result<f64> {
    if t < 1 {
        return Err(EbmError::invalid("time step must be at least 1"));
    }
    Ok(a * (t as f64).ln().sqrt())
}

fn require_arms(n: usize) -> Result<()> {
    if n == 0 {
        return Err(EbmError::invalid("no arms to choose from"));
    }
    Ok(())
}

/// `U_k = μ̂_k + α τ_k`.
pub fn select_ebm_ucb(posteriors: &[GaussianPosterior], x: &DVector<f64>, alpha: f64) -> Result<Decision> {
    require_arms(posteriors.len())?;
    let mut mu = Vec::with_capacity(posteriors.len());
    let mut tau = Vec::with_capacity(posteriors.len());
    for p in posteriors {
        let pred = p.predict(x)?;
        mu.push(pred.mu);
        tau.push(pred.tau());
    }
    let scores = mu.iter().zip(&tau).map(|(m, t)| m + alpha * t).collect();
    Ok(Decision::from_scores(scores, mu, tau))
}

fn sample_score<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    x: &DVector<f64>,
    alpha: f64,
    rng: &mut R,
) -> Result<f64> {
    let l = psd_factor(cov, "sampling covariance")?;
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let draw = mean + (l * z) * alpha;
    Ok(x.dot(&draw))
}

/// Score each arm with `xᵀβ̆`, `β̆ ~ N(mean, α² cov)`.
pub fn select_ebm_ts<R: Rng + ?Sized>(
    posteriors: &[GaussianPosterior],
    x: &DVector<f64>,
    alpha: f64,
    rng: &mut R,
) -> Result<Decision> {
    require_arms(posteriors.len())?;
    if alpha < 0.0 {
        return Err(EbmError::invalid("alpha must be nonnegative"));
    }
    let mut mu = Vec::with_capacity(posteriors.len());
    let mut tau = Vec::with_capacity(posteriors.len());
    let mut scores = Vec::with_capacity(posteriors.len());
    for p in posteriors {
        let pred = p.predict(x)?;
        mu.push(pred.mu);
        tau.push(pred.tau());
        scores.push(sample_score(&p.mean, &p.cov, x, alpha, rng)?);
    }
    Ok(Decision::from_scores(scores, mu, tau))
}

/// Ridge posterior of one arm from its own instance data only.
#[derive(Debug, Clone)]
pub struct RidgeFit {
    pub theta: DVector<f64>,
    pub a_inv: DMatrix<f64>,
}

pub fn ridge_fit(stats: &SufficientStats, lambda: f64) -> Result<RidgeFit> {
    let d = stats.dim();
    let a = stats.gram() + DMatrix::identity(d, d) * lambda;
    let a_inv = spd_inverse(&a, "ridge matrix")?;
    let theta = &a_inv * stats.xty();
    Ok(RidgeFit { theta, a_inv })
}

/// Independent-learning baselines: LinUCB, LinTS and OLS-greedy on ridge fits.
pub fn select_baseline<R: Rng + ?Sized>(
    kind: PolicyKind,
    per_arm_stats: &[&SufficientStats],
    x: &DVector<f64>,
    alpha: f64,
    lambda: f64,
    rng: &mut R,
) -> Result<Decision> {
    require_arms(per_arm_stats.len())?;
    let mut mu = Vec::with_capacity(per_arm_stats.len());
    let mut tau = Vec::with_capacity(per_arm_stats.len());
    let mut scores = Vec::with_capacity(per_arm_stats.len());
    for stats in per_arm_stats {
        if stats.dim() != x.len() {
            return Err(EbmError::DimensionMismatch {
                what: "context",
                expected: stats.dim(),
                got: x.len(),
            });
        }
        let fit = ridge_fit(stats, lambda)?;
        let m = x.dot(&fit.theta);
        let width = x.dot(&(&fit.a_inv * x)).max(0.0).sqrt();
        let score = match kind {
            PolicyKind::LinUcb => m + alpha * width,
            PolicyKind::LinTs => sample_score(&fit.theta, &fit.a_inv, x, alpha, rng)?,
            PolicyKind::OlsGreedy => m,
            other => {
                return Err(EbmError::invalid(format!("{other} is not a baseline policy")));
            }
        };
        mu.push(m);
        tau.push(width);
        scores.push(score);
    }
    Ok(Decision::from_scores(scores, mu, tau))
}

/// Picks the true best arm; used to calibrate zero regret.
pub fn select_oracle(true_betas: &[DVector<f64>], x: &DVector<f64>) -> Result<Decision> {
    require_arms(true_betas.len())?;
    let scores: Vec<f64> = true_betas.iter().map(|b| x.dot(b)).collect();
    let n = scores.len();
    Ok(Decision::from_scores(scores.clone(), scores, vec![0.0; n]))
}

/// Lowest-index arm this instance has pulled fewer than `min_pulls` times.
pub fn forced_initialization(min_pulls: u64, pull_counts: &[u64]) -> Option<usize> {
    pull_counts.iter().position(|&c| c < min_pulls)
}
