//! Exact Gaussian posteriors for the two-level arm model
//!
//! ```text
//!   β_k0      ~ N(0, λ⁻¹ I)
//!   β_kj | β_k0 ~ N(β_k0, Σ_k)
//!   y | β_kj  ~ N(x·β_kj, σ_k²)
//! ```
//!
//! Everything is driven by per-(arm, instance) sufficient statistics, so the
//! `T × T` reward covariance `V = X Σ Xᵀ + σ² I` is never formed. The
//! Woodbury identity turns `V⁻¹` into `σ⁻²(I − X C̃ Xᵀ)` with the `d × d`
//! matrix `C̃ = (XᵀX + σ² Σ⁻¹)⁻¹`, and then
//!
//! ```text
//!   XᵀV⁻¹X = Σ⁻¹ − σ² Σ⁻¹ C̃ Σ⁻¹ = Σ⁻¹ C̃ XᵀX
//!   XᵀV⁻¹y = σ⁻²(Xᵀy − XᵀX C̃ Xᵀy) = Σ⁻¹ C̃ Xᵀy
//! ```
//!
//! The right-hand forms are the ones evaluated: they avoid the cancellation
//! of the differences when `Σ` is very small or very large.
//!
//! The posterior is computed in three steps: the conditional of `β_kj` given
//! `β_k0` ([`conditional_posterior`]), the posterior of the shared mean
//! ([`shared_posterior`]), and the marginal of `β_kj` with `β_k0` integrated
//! out ([`marginal_posterior`]).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, EbmError, Result};
use crate::linalg::{spd_inverse, symmetrize, symmetrized, NEG_TOLERANCE};

/// Accumulated `(XᵀX, Xᵀy, yᵀy, T)` for one (arm, instance) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficientStats {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    count: u64,
    yty: f64,
}

impl SufficientStats {
    pub fn new(dim: usize) -> Self {
        Self {
            gram: DMatrix::zeros(dim, dim),
            xty: DVector::zeros(dim),
            count: 0,
            yty: 0.0,
        }
    }

    /// Build statistics from already-accumulated parts.
    pub fn from_parts(gram: DMatrix<f64>, xty: DVector<f64>, count: u64, yty: f64) -> Result<Self> {
        check_dim("gram columns", gram.nrows(), gram.ncols())?;
        check_dim("xty", gram.nrows(), xty.len())?;
        if count == 0 && (gram.amax() != 0.0 || xty.amax() != 0.0 || yty != 0.0) {
            return Err(EbmError::invalid("empty statistics must be all zero"));
        }
        Ok(Self {
            gram: symmetrized(gram),
            xty,
            count,
            yty,
        })
    }

    /// Statistics of a batch `(X, y)` with one row per observation.
    pub fn from_batch(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        check_dim("batch rewards", x.nrows(), y.len())?;
        let mut stats = Self::new(x.ncols());
        for (row, &yi) in x.row_iter().zip(y.iter()) {
            stats.observe(&row.transpose(), yi)?;
        }
        Ok(stats)
    }

    pub fn dim(&self) -> usize {
        self.xty.len()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn xty(&self) -> &DVector<f64> {
        &self.xty
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn yty(&self) -> f64 {
        self.yty
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Add one observation in place.
    pub fn observe(&mut self, x: &DVector<f64>, y: f64) -> Result<()> {
        check_dim("context", self.dim(), x.len())?;
        self.gram.ger(1.0, x, x, 1.0);
        self.xty.axpy(y, x, 1.0);
        self.yty += y * y;
        self.count += 1;
        Ok(())
    }

    /// Pure form of [`observe`](Self::observe).
    pub fn with_observation(&self, x: &DVector<f64>, y: f64) -> Result<Self> {
        let mut next = self.clone();
        next.observe(x, y)?;
        Ok(next)
    }

    /// `‖y − Xβ‖²` expanded through the statistics, clamped at zero.
    pub fn residual_sum_of_squares(&self, beta: &DVector<f64>) -> Result<f64> {
        check_dim("coefficients", self.dim(), beta.len())?;
        let quad = beta.dot(&(&self.gram * beta));
        Ok((self.yty - 2.0 * beta.dot(&self.xty) + quad).max(0.0))
    }
}

/// Mean and covariance of a Gaussian belief over a `d`-vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Predicted reward and its mean squared error for one context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mu: f64,
    pub tau2: f64,
}

impl Prediction {
    pub fn tau(&self) -> f64 {
        self.tau2.sqrt()
    }
}

impl GaussianPosterior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_dim("posterior covariance", mean.len(), cov.nrows())?;
        check_dim("posterior covariance", mean.len(), cov.ncols())?;
        Ok(Self {
            mean,
            cov: symmetrized(cov),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `mu = xᵀ mean`, `tau2 = xᵀ cov x` (round-off negatives clamped to 0).
    pub fn predict(&self, x: &DVector<f64>) -> Result<Prediction> {
        check_dim("context", self.dim(), x.len())?;
        let mu = x.dot(&self.mean);
        let tau2 = x.dot(&(&self.cov * x));
        if tau2 < -NEG_TOLERANCE {
            return Err(EbmError::numerical(format!("predictive variance {tau2:e} is negative")));
        }
        Ok(Prediction {
            mu,
            tau2: tau2.max(0.0),
        })
    }
}

/// Prior hyperparameters of one arm: noise variance `σ²`, instance spread
/// `Σ` (with its cached inverse) and the shared-mean precision `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmPrior {
    sigma2: f64,
    sigma: DMatrix<f64>,
    sigma_factor: DMatrix<f64>,
    sigma_inv: DMatrix<f64>,
    lambda: f64,
}

impl ArmPrior {
    pub fn new(sigma2: f64, sigma: DMatrix<f64>, lambda: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(EbmError::invalid(format!(
                "noise variance must be positive, got {sigma2}"
            )));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(EbmError::invalid(format!("lambda must be positive, got {lambda}")));
        }
        check_dim("prior covariance", sigma.nrows(), sigma.ncols())?;
        let sigma = symmetrized(sigma);
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| EbmError::numerical("prior covariance: matrix is not positive definite"))?;
        let sigma_inv = symmetrized(chol.inverse());
        Ok(Self {
            sigma2,
            sigma,
            sigma_factor: chol.l(),
            sigma_inv,
            lambda,
        })
    }

    /// `Σ = scale · I`.
    pub fn isotropic(dim: usize, sigma2: f64, scale: f64, lambda: f64) -> Result<Self> {
        Self::new(sigma2, DMatrix::identity(dim, dim) * scale, lambda)
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Lower Cholesky factor `L` with `L Lᵀ = Σ`.
    pub fn sigma_factor(&self) -> &DMatrix<f64> {
        &self.sigma_factor
    }

    pub fn sigma_inv(&self) -> &DMatrix<f64> {
        &self.sigma_inv
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// `C̃ = (XᵀX + σ² Σ⁻¹)⁻¹`; equals `Σ / σ²` exactly when there is no data.
pub fn tilde_cov(stats: &SufficientStats, prior: &ArmPrior) -> Result<DMatrix<f64>> {
    check_dim("statistics", prior.dim(), stats.dim())?;
    if stats.is_empty() {
        return Ok(prior.sigma() / prior.sigma2());
    }
    let precision = stats.gram() + prior.sigma_inv() * prior.sigma2();
    spd_inverse(&precision, "XᵀX + σ²Σ⁻¹")
}

/// Posterior of `β_kj` given the instance data and a fixed shared mean `β_k0`:
/// mean `σ² C̃ Σ⁻¹ β_k0 + C̃ Xᵀy`, covariance `σ² C̃`.
pub fn conditional_posterior(
    stats: &SufficientStats,
    prior: &ArmPrior,
    beta_k0: &DVector<f64>,
) -> Result<GaussianPosterior> {
    check_dim("shared mean", prior.dim(), beta_k0.len())?;
    if stats.is_empty() {
        check_dim("statistics", prior.dim(), stats.dim())?;
        return GaussianPosterior::new(beta_k0.clone(), prior.sigma().clone());
    }
    let ct = tilde_cov(stats, prior)?;
    let mean = &ct * (prior.sigma_inv() * beta_k0 * prior.sigma2() + stats.xty());
    GaussianPosterior::new(mean, ct * prior.sigma2())
}

/// One instance's contribution `(XᵀV⁻¹X, XᵀV⁻¹y)` to the shared posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGram {
    pub xvx: DMatrix<f64>,
    pub xvy: DVector<f64>,
}

impl WeightedGram {
    pub fn zeros(dim: usize) -> Self {
        Self {
            xvx: DMatrix::zeros(dim, dim),
            xvy: DVector::zeros(dim),
        }
    }
}

/// `(XᵀV⁻¹X, XᵀV⁻¹y)` from `d × d` algebra only.
pub fn weighted_gram(stats: &SufficientStats, prior: &ArmPrior) -> Result<WeightedGram> {
    check_dim("statistics", prior.dim(), stats.dim())?;
    if stats.is_empty() {
        return Ok(WeightedGram::zeros(stats.dim()));
    }
    // With Σ = L Lᵀ and M = Lᵀ XᵀX L = Q diag(m) Qᵀ:
    // XᵀV⁻¹X = P diag(m / (m + σ²)) Pᵀ and XᵀV⁻¹y = P diag(1 / (m + σ²)) Qᵀ Lᵀ Xᵀy
    // where P = L⁻ᵀ Q. The first form is a Gram matrix, so it stays PSD.
    let l = prior.sigma_factor();
    let s2 = prior.sigma2();
    let m = symmetrized(l.transpose() * stats.gram() * l);
    let eig = m.symmetric_eigen();
    let q = &eig.eigenvectors;
    let p = l
        .transpose()
        .solve_upper_triangular(q)
        .ok_or_else(|| EbmError::numerical("prior factor is singular"))?;
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    let root = vals.map(|v| (v / (v + s2)).sqrt());
    let b = &p * DMatrix::from_diagonal(&root);
    let xvx = symmetrized(&b * b.transpose());
    let rotated = q.transpose() * (l.transpose() * stats.xty());
    let scaled = rotated.zip_map(&vals, |r, v| r / (v + s2));
    let xvy = &p * scaled;
    Ok(WeightedGram { xvx, xvy })
}

/// Posterior `N(β̂_k0, Φ)` of the shared mean with
/// `Φ = (Σ_j XᵀV⁻¹X + λI)⁻¹` and `β̂_k0 = Φ Σ_j XᵀV⁻¹y`.
pub fn shared_posterior(grams: &[WeightedGram], lambda: f64) -> Result<GaussianPosterior> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(EbmError::invalid(format!("lambda must be positive, got {lambda}")));
    }
    let first = grams
        .first()
        .ok_or_else(|| EbmError::invalid("shared posterior needs at least one instance"))?;
    let dim = first.xvy.len();
    let mut precision = DMatrix::identity(dim, dim) * lambda;
    let mut rhs = DVector::zeros(dim);
    for g in grams {
        check_dim("weighted gram", dim, g.xvx.nrows())?;
        check_dim("weighted gram", dim, g.xvy.len())?;
        precision += &g.xvx;
        rhs += &g.xvy;
    }
    let phi = spd_inverse(&precision, "shared precision")?;
    let mean = &phi * rhs;
    GaussianPosterior::new(mean, phi)
}

/// Marginal posterior of `β_kj` with the shared mean integrated out:
/// mean `σ² C̃ Σ⁻¹ β̂_k0 + C̃ Xᵀy`, covariance `σ² C̃ + σ⁴ C̃ Σ⁻¹ Φ Σ⁻¹ C̃`.
pub fn marginal_posterior(
    stats: &SufficientStats,
    prior: &ArmPrior,
    shared: &GaussianPosterior,
) -> Result<GaussianPosterior> {
    check_dim("shared posterior", prior.dim(), shared.dim())?;
    if stats.is_empty() {
        check_dim("statistics", prior.dim(), stats.dim())?;
        return GaussianPosterior::new(shared.mean.clone(), prior.sigma() + &shared.cov);
    }
    let s2 = prior.sigma2();
    let ct = tilde_cov(stats, prior)?;
    // σ² C̃ Σ⁻¹ maps the shared mean into the instance estimate
    let pull = &ct * prior.sigma_inv() * s2;
    let mean = &pull * &shared.mean + &ct * stats.xty();
    let mut cov = &ct * s2 + &pull * &shared.cov * pull.transpose();
    symmetrize(&mut cov);
    GaussianPosterior::new(mean, cov)
}

/// Posterior state of one arm across all instances.
///
/// Each instance's weighted gram is cached and refreshed only when that
/// instance is observed, the shared posterior is rebuilt from the cache, and
/// marginal posteriors are computed on demand.
#[derive(Debug, Clone)]
pub struct ArmEngine {
    prior: ArmPrior,
    stats: Vec<SufficientStats>,
    grams: Vec<WeightedGram>,
    shared: GaussianPosterior,
}

impl ArmEngine {
    pub fn new(n_instances: usize, prior: ArmPrior) -> Result<Self> {
        if n_instances == 0 {
            return Err(EbmError::invalid("an arm needs at least one instance"));
        }
        let dim = prior.dim();
        let grams = vec![WeightedGram::zeros(dim); n_instances];
        let shared = shared_posterior(&grams, prior.lambda())?;
        Ok(Self {
            prior,
            stats: vec![SufficientStats::new(dim); n_instances],
            grams,
            shared,
        })
    }

    pub fn n_instances(&self) -> usize {
        self.stats.len()
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn prior(&self) -> &ArmPrior {
        &self.prior
    }

    pub fn shared(&self) -> &GaussianPosterior {
        &self.shared
    }

    pub fn stats(&self, instance: usize) -> &SufficientStats {
        &self.stats[instance]
    }

    pub fn all_stats(&self) -> &[SufficientStats] {
        &self.stats
    }

    pub fn total_count(&self) -> u64 {
        self.stats.iter().map(SufficientStats::count).sum()
    }

    fn check_instance(&self, instance: usize) -> Result<()> {
        if instance >= self.stats.len() {
            return Err(EbmError::invalid(format!(
                "instance {instance} out of range (have {})",
                self.stats.len()
            )));
        }
        Ok(())
    }

    /// Record a reward for `instance` and refresh the shared posterior.
    pub fn observe(&mut self, instance: usize, x: &DVector<f64>, y: f64) -> Result<()> {
        self.check_instance(instance)?;
        self.stats[instance].observe(x, y)?;
        self.grams[instance] = weighted_gram(&self.stats[instance], &self.prior)?;
        self.shared = shared_posterior(&self.grams, self.prior.lambda())?;
        Ok(())
    }

    /// Swap in new hyperparameters; every cached gram depends on them.
    pub fn set_prior(&mut self, prior: ArmPrior) -> Result<()> {
        check_dim("prior", self.dim(), prior.dim())?;
        let grams = self
            .stats
            .iter()
            .map(|s| weighted_gram(s, &prior))
            .collect::<Result<Vec<_>>>()?;
        self.shared = shared_posterior(&grams, prior.lambda())?;
        self.grams = grams;
        self.prior = prior;
        Ok(())
    }

    pub fn marginal(&self, instance: usize) -> Result<GaussianPosterior> {
        self.check_instance(instance)?;
        marginal_posterior(&self.stats[instance], &self.prior, &self.shared)
    }

    pub fn conditional(&self, instance: usize, beta_k0: &DVector<f64>) -> Result<GaussianPosterior> {
        self.check_instance(instance)?;
        conditional_posterior(&self.stats[instance], &self.prior, beta_k0)
    }
}
