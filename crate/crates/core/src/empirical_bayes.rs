//! Plug-in estimates of the arm hyperparameters `Σ_k` and `σ_k²`.
//!
//! `Σ_k` comes from the spread of per-instance least-squares fits, hard
//! thresholded entrywise and then floored in eigenvalue so it can be inverted.
//! `σ_k²` is the pooled residual variance of the arm's instance estimates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, EbmError, Result};
use crate::linalg::{spd_solve, symmetrize, symmetrized};
use crate::posterior::{marginal_posterior, shared_posterior, weighted_gram, ArmEngine, ArmPrior, SufficientStats};

/// Least-squares fits whose normal matrix is worse conditioned than this fall
/// back to the ridge solution.
pub const MAX_CONDITION: f64 = 1e10;

/// Outcome of a per-instance least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub enum OlsEstimate {
    /// No observations.
    Unavailable,
    /// Plain `(XᵀX)⁻¹Xᵀy`.
    Ols(DVector<f64>),
    /// `(XᵀX + ρI)⁻¹Xᵀy`, used when there are fewer than `d` observations or
    /// `XᵀX` is ill-conditioned.
    Ridge(DVector<f64>),
}

impl OlsEstimate {
    pub fn coefficients(&self) -> Option<&DVector<f64>> {
        match self {
            OlsEstimate::Unavailable => None,
            OlsEstimate::Ols(b) | OlsEstimate::Ridge(b) => Some(b),
        }
    }

    /// Only true least-squares fits feed the scatter matrix.
    pub fn as_ols(&self) -> Option<&DVector<f64>> {
        match self {
            OlsEstimate::Ols(b) => Some(b),
            _ => None,
        }
    }
}

pub fn ols_estimate(stats: &SufficientStats, ridge_fallback: f64) -> OlsEstimate {
    if stats.is_empty() {
        return OlsEstimate::Unavailable;
    }
    let d = stats.dim();
    if stats.count() >= d as u64 {
        let eig = stats.gram().clone().symmetric_eigen().eigenvalues;
        let hi = eig.max();
        let lo = eig.min();
        if lo > 0.0 && hi / lo < MAX_CONDITION {
            if let Ok(beta) = spd_solve(stats.gram(), stats.xty(), "normal equations") {
                return OlsEstimate::Ols(beta);
            }
        }
    }
    let regularized = stats.gram() + DMatrix::identity(d, d) * ridge_fallback.max(0.0);
    match spd_solve(&regularized, stats.xty(), "ridge normal equations") {
        Ok(beta) => OlsEstimate::Ridge(beta),
        Err(_) => OlsEstimate::Unavailable,
    }
}

/// Pooled residual variance `Σ_j ‖y_j − X_j β̂_j‖² / max(Σ_j T_j − d − 1, 1)`,
/// floored at `floor`.
pub fn estimate_noise_variance(
    stats_by_instance: &[SufficientStats],
    beta_hat_by_instance: &[DVector<f64>],
    dim: usize,
    floor: f64,
) -> Result<f64> {
    check_dim("coefficient list", stats_by_instance.len(), beta_hat_by_instance.len())?;
    let mut rss = 0.0;
    let mut total: u64 = 0;
    for (stats, beta) in stats_by_instance.iter().zip(beta_hat_by_instance) {
        check_dim("statistics", dim, stats.dim())?;
        rss += stats.residual_sum_of_squares(beta)?;
        total += stats.count();
    }
    let denom = (total as f64 - dim as f64 - 1.0).max(1.0);
    Ok((rss / denom).max(floor))
}

/// Centered scatter of the estimates divided by `N' − 1`.
pub fn sample_covariance(estimates: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let n = estimates.len();
    if n < 2 {
        return Err(EbmError::InsufficientInstances { needed: 2, have: n });
    }
    let d = estimates[0].len();
    let mut mean = DVector::zeros(d);
    for b in estimates {
        check_dim("estimate", d, b.len())?;
        mean += b;
    }
    mean /= n as f64;
    let mut scatter = DMatrix::zeros(d, d);
    for b in estimates {
        let c = b - &mean;
        scatter.ger(1.0, &c, &c, 1.0);
    }
    scatter /= (n - 1) as f64;
    symmetrize(&mut scatter);
    Ok(scatter)
}

/// Thresholded, eigenvalue-repaired covariance estimate for one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub sigma_hat: DMatrix<f64>,
    pub gamma: f64,
    /// Instances whose least-squares fit entered the scatter.
    pub n_contributing: usize,
    /// Whether eigenvalues had to be raised to the floor.
    pub repaired: bool,
}

/// Zero every entry with `|s_ij| < gamma`, then raise eigenvalues below
/// `eig_floor` to `eig_floor`.
pub fn threshold_covariance(s: &DMatrix<f64>, gamma: f64, eig_floor: f64) -> Result<CovarianceEstimate> {
    mask_and_repair(s, gamma, eig_floor, false)
}

/// As [`threshold_covariance`], but variances on the diagonal are kept.
pub fn threshold_off_diagonal(s: &DMatrix<f64>, gamma: f64, eig_floor: f64) -> Result<CovarianceEstimate> {
    mask_and_repair(s, gamma, eig_floor, true)
}

fn mask_and_repair(s: &DMatrix<f64>, gamma: f64, eig_floor: f64, keep_diagonal: bool) -> Result<CovarianceEstimate> {
    if !(gamma >= 0.0) {
        return Err(EbmError::invalid(format!("threshold must be nonnegative, got {gamma}")));
    }
    if !(eig_floor > 0.0) {
        return Err(EbmError::invalid(format!(
            "eigenvalue floor must be positive, got {eig_floor}"
        )));
    }
    check_dim("covariance columns", s.nrows(), s.ncols())?;
    let masked = DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| {
        let v = s[(i, j)];
        if v.abs() >= gamma || (keep_diagonal && i == j) {
            v
        } else {
            0.0
        }
    });
    let thresholded = symmetrized(masked);
    let eig = thresholded.clone().symmetric_eigen();
    if eig.eigenvalues.min() >= eig_floor {
        return Ok(CovarianceEstimate {
            sigma_hat: thresholded,
            gamma,
            n_contributing: 0,
            repaired: false,
        });
    }
    let floored = eig.eigenvalues.map(|l| l.max(eig_floor));
    let q = &eig.eigenvectors;
    let repaired = symmetrized(q * DMatrix::from_diagonal(&floored) * q.transpose());
    Ok(CovarianceEstimate {
        sigma_hat: repaired,
        gamma,
        n_contributing: 0,
        repaired: true,
    })
}

/// Rate-based threshold `c · max_i s_ii · sqrt(ln d / N')`.
pub fn select_threshold(s: &DMatrix<f64>, n_prime: usize, c_gamma: f64) -> Result<f64> {
    if n_prime < 2 {
        return Err(EbmError::InsufficientInstances {
            needed: 2,
            have: n_prime,
        });
    }
    let max_diag = s.diagonal().max().max(0.0);
    Ok(threshold_rate(max_diag, s.nrows() as f64, n_prime, c_gamma))
}

/// `c · max_diag · sqrt(ln d / N')` with a real-valued dimension.
pub fn threshold_rate(max_diag: f64, dim: f64, n_prime: usize, c_gamma: f64) -> f64 {
    c_gamma * max_diag * (dim.ln() / n_prime as f64).sqrt()
}

/// How the threshold `γ` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ThresholdRule {
    Rate { c_gamma: f64 },
    Fixed { gamma: f64 },
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::Rate { c_gamma: 0.5 }
    }
}

impl ThresholdRule {
    pub fn gamma(&self, s: &DMatrix<f64>, n_prime: usize) -> Result<f64> {
        match *self {
            ThresholdRule::Rate { c_gamma } => select_threshold(s, n_prime, c_gamma),
            ThresholdRule::Fixed { gamma } => Ok(gamma),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmpiricalBayesConfig {
    pub threshold: ThresholdRule,
    /// Also zero variances below the threshold (off by default).
    pub threshold_diagonal: bool,
    pub eig_floor: f64,
    pub noise_floor: f64,
    pub ridge_fallback: f64,
}

impl Default for EmpiricalBayesConfig {
    fn default() -> Self {
        Self {
            threshold: ThresholdRule::default(),
            threshold_diagonal: false,
            eig_floor: 1e-4,
            noise_floor: 1e-6,
            ridge_fallback: 1e-6,
        }
    }
}

/// Estimate `Σ̂` from one arm's per-instance statistics.
///
/// Returns `None` (keep the cold-start prior) until at least two instances
/// have a proper least-squares fit and the arm has `d + 1` pulls in total.
pub fn estimate_covariance(
    stats_by_instance: &[SufficientStats],
    config: &EmpiricalBayesConfig,
) -> Result<Option<CovarianceEstimate>> {
    let Some(first) = stats_by_instance.first() else {
        return Ok(None);
    };
    let d = first.dim();
    let total: u64 = stats_by_instance.iter().map(SufficientStats::count).sum();
    if total < d as u64 + 1 {
        return Ok(None);
    }
    let fits: Vec<DVector<f64>> = stats_by_instance
        .iter()
        .filter_map(|s| ols_estimate(s, config.ridge_fallback).as_ols().cloned())
        .collect();
    if fits.len() < 2 {
        return Ok(None);
    }
    let s = sample_covariance(&fits)?;
    let gamma = config.threshold.gamma(&s, fits.len())?;
    let mut est = if config.threshold_diagonal {
        threshold_covariance(&s, gamma, config.eig_floor)?
    } else {
        threshold_off_diagonal(&s, gamma, config.eig_floor)?
    };
    est.n_contributing = fits.len();
    Ok(Some(est))
}

/// Refresh an arm's hyperparameters from its data: `Σ̂` from the thresholded
/// scatter of per-instance fits, then `σ̂²` from the residuals of the
/// marginal posterior means under the new `Σ̂`. Returns whether the prior
/// changed (it stays put during the cold start).
pub fn refit_prior(engine: &mut ArmEngine, config: &EmpiricalBayesConfig) -> Result<bool> {
    let Some(cov) = estimate_covariance(engine.all_stats(), config)? else {
        return Ok(false);
    };
    let lambda = engine.prior().lambda();
    let candidate = ArmPrior::new(engine.prior().sigma2(), cov.sigma_hat.clone(), lambda)?;
    let grams = engine
        .all_stats()
        .iter()
        .map(|s| weighted_gram(s, &candidate))
        .collect::<Result<Vec<_>>>()?;
    let shared = shared_posterior(&grams, lambda)?;
    let means = engine
        .all_stats()
        .iter()
        .map(|s| marginal_posterior(s, &candidate, &shared).map(|p| p.mean))
        .collect::<Result<Vec<_>>>()?;
    let sigma2 = estimate_noise_variance(engine.all_stats(), &means, engine.dim(), config.noise_floor)?;
    engine.set_prior(ArmPrior::new(sigma2, cov.sigma_hat, lambda)?)?;
    Ok(true)
}
