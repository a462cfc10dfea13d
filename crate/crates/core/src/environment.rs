//! Ground-truth multi-bandit environments: generation, sampling and file I/O.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{EbmError, Result};
use crate::linalg::symmetrized;

/// Elementwise law of the context vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ContextDistribution {
    /// Each coordinate is `N(−center, sd²)` with probability `weight`,
    /// otherwise `N(center, sd²)`.
    MixtureGaussian {
        weight: f64,
        center: f64,
        sd: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
}

impl Default for ContextDistribution {
    fn default() -> Self {
        Self::mixture()
    }
}

impl ContextDistribution {
    /// Equal mixture of `N(−1, 1)` and `N(1, 1)`.
    pub fn mixture() -> Self {
        ContextDistribution::MixtureGaussian {
            weight: 0.5,
            center: 1.0,
            sd: 1.0,
        }
    }

    /// Uniform on `[−1, 1]`.
    pub fn uniform() -> Self {
        ContextDistribution::Uniform { low: -1.0, high: 1.0 }
    }

    /// Named presets accepted on the command line.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "mixture_gaussian" | "mixture-gaussian" | "mixture" => Some(Self::mixture()),
            "uniform" => Some(Self::uniform()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ContextDistribution::MixtureGaussian { weight, center, sd } => {
                if !(0.0..=1.0).contains(&weight) {
                    return Err(EbmError::document("context.params.weight", "must lie in [0, 1]"));
                }
                if !center.is_finite() {
                    return Err(EbmError::document("context.params.center", "must be finite"));
                }
                if !(sd >= 0.0 && sd.is_finite()) {
                    return Err(EbmError::document("context.params.sd", "must be nonnegative"));
                }
            }
            ContextDistribution::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(EbmError::document("context.params", "need finite low < high"));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> DVector<f64> {
        match *self {
            ContextDistribution::MixtureGaussian { weight, center, sd } => DVector::from_fn(dim, |_, _| {
                let m = if rng.random::<f64>() < weight { -center } else { center };
                let z: f64 = rng.sample(StandardNormal);
                m + sd * z
            }),
            ContextDistribution::Uniform { low, high } => DVector::from_fn(dim, |_, _| rng.random_range(low..=high)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalMode {
    #[default]
    Balanced,
    /// Instance 0 arrives a tenth as often as each of the others.
    DataPoor,
}

impl ArrivalMode {
    pub fn probabilities(self, n_instances: usize) -> Vec<f64> {
        let n = n_instances as f64;
        match self {
            ArrivalMode::Balanced => vec![1.0 / n; n_instances],
            ArrivalMode::DataPoor => {
                if n_instances == 1 {
                    return vec![1.0];
                }
                let p = 1.0 / (n - 0.9);
                let mut probs = vec![p; n_instances];
                probs[0] = 0.1 * p;
                probs
            }
        }
    }
}

/// Hidden state of a simulated environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvTruth {
    pub n_instances: usize,
    pub n_arms: usize,
    pub dim: usize,
    /// `beta[j][k]` is the parameter of arm `k` in instance `j`.
    pub beta: Vec<Vec<DVector<f64>>>,
    pub beta0: Vec<DVector<f64>>,
    pub sigma_prior: Vec<DMatrix<f64>>,
    pub noise_sd: Vec<f64>,
    pub arrival: Vec<f64>,
    pub context: ContextDistribution,
}

fn standard_normal_vec<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}

fn check_shape(n_instances: usize, n_arms: usize, dim: usize) -> Result<()> {
    for (name, v) in [("n_instances", n_instances), ("n_arms", n_arms), ("dim", dim)] {
        if v == 0 {
            return Err(EbmError::document(name, "must be at least 1"));
        }
    }
    Ok(())
}

/// Hierarchical model: `β_k0 ~ N(0, I)`, `Σ_k = b bᵀ + I` with `b ~ N(0, I)`,
/// `β_kj ~ N(β_k0, Σ_k)`, unit noise.
pub fn generate_hierarchical_env<R: Rng + ?Sized>(
    n_instances: usize,
    n_arms: usize,
    dim: usize,
    arrival: ArrivalMode,
    context: ContextDistribution,
    rng: &mut R,
) -> Result<EnvTruth> {
    check_shape(n_instances, n_arms, dim)?;
    context.validate()?;
    let mut beta0 = Vec::with_capacity(n_arms);
    let mut sigma_prior = Vec::with_capacity(n_arms);
    let mut factors = Vec::with_capacity(n_arms);
    for _ in 0..n_arms {
        beta0.push(standard_normal_vec(dim, rng));
        let b = standard_normal_vec(dim, rng);
        let sigma = symmetrized(&b * b.transpose() + DMatrix::identity(dim, dim));
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| EbmError::numerical("bbᵀ + I failed to factor"))?;
        factors.push(chol.l());
        sigma_prior.push(sigma);
    }
    let beta = (0..n_instances)
        .map(|_| {
            (0..n_arms)
                .map(|k| &beta0[k] + &factors[k] * standard_normal_vec(dim, rng))
                .collect()
        })
        .collect();
    Ok(EnvTruth {
        n_instances,
        n_arms,
        dim,
        beta,
        beta0,
        sigma_prior,
        noise_sd: vec![1.0; n_arms],
        arrival: arrival.probabilities(n_instances),
        context,
    })
}

/// Sparse heterogeneity: each instance deviates from `β_k0` on exactly
/// `support` coordinates, with `N(0, delta_scale²)` deviations.
#[allow(clippy::too_many_arguments)]
pub fn generate_sparse_env<R: Rng + ?Sized>(
    n_instances: usize,
    n_arms: usize,
    dim: usize,
    support: usize,
    delta_scale: f64,
    arrival: ArrivalMode,
    context: ContextDistribution,
    rng: &mut R,
) -> Result<EnvTruth> {
    check_shape(n_instances, n_arms, dim)?;
    context.validate()?;
    if support > dim {
        return Err(EbmError::invalid(format!(
            "support size {support} exceeds dimension {dim}"
        )));
    }
    if !(delta_scale > 0.0 && delta_scale.is_finite()) {
        return Err(EbmError::invalid("delta_scale must be positive"));
    }
    let beta0: Vec<DVector<f64>> = (0..n_arms).map(|_| standard_normal_vec(dim, rng)).collect();
    let dev = Normal::new(0.0, delta_scale).map_err(|e| EbmError::invalid(e.to_string()))?;
    let beta = (0..n_instances)
        .map(|_| {
            (0..n_arms)
                .map(|k| {
                    let mut b = beta0[k].clone();
                    for i in sample_indices(rng, dim, support).iter() {
                        b[i] += dev.sample(rng);
                    }
                    b
                })
                .collect()
        })
        .collect();
    Ok(EnvTruth {
        n_instances,
        n_arms,
        dim,
        beta,
        beta0,
        sigma_prior: vec![DMatrix::identity(dim, dim) * (delta_scale * delta_scale); n_arms],
        noise_sd: vec![1.0; n_arms],
        arrival: arrival.probabilities(n_instances),
        context,
    })
}

/// Categorical draw by inverse CDF; zero-probability instances are never chosen.
pub fn sample_arrival<R: Rng + ?Sized>(arrival: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (j, &p) in arrival.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last_positive = j;
        acc += p;
        if u < acc {
            return j;
        }
    }
    last_positive
}

impl EnvTruth {
    pub fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.context.sample(self.dim, rng)
    }

    pub fn sample_arrival<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_arrival(&self.arrival, rng)
    }

    /// `xᵀβ_kj`.
    pub fn expected_reward(&self, instance: usize, arm: usize, x: &DVector<f64>) -> f64 {
        x.dot(&self.beta[instance][arm])
    }

    /// `xᵀβ_kj + σ_k z`.
    pub fn sample_reward<R: Rng + ?Sized>(&self, instance: usize, arm: usize, x: &DVector<f64>, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.expected_reward(instance, arm, x) + self.noise_sd[arm] * z
    }

    /// Best arm under the true parameters (lowest index on ties).
    pub fn optimal_arm(&self, instance: usize, x: &DVector<f64>) -> usize {
        let mut best = 0;
        let mut best_value = f64::NEG_INFINITY;
        for k in 0..self.n_arms {
            let value = self.expected_reward(instance, k, x);
            if value > best_value {
                best = k;
                best_value = value;
            }
        }
        best
    }

    /// Largest `‖β_kj‖₂` over all arms and instances.
    pub fn b_max(&self) -> f64 {
        self.beta.iter().flatten().map(|b| b.norm()).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        EnvFile::from(self).into_truth().map(|_| ())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&EnvFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: EnvFile = serde_json::from_str(text)?;
        file.into_truth()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        std::fs::write(path, text).map_err(|e| EbmError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| EbmError::io(path, e))?;
        Self::from_json(&text)
    }
}

/// On-disk form of an environment.
///
/// Arrays are nested row-major: `beta[j][k][i]`, `sigma_prior[k][r][c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvFile {
    pub n_instances: usize,
    pub n_arms: usize,
    pub dim: usize,
    pub beta: Vec<Vec<Vec<f64>>>,
    pub beta0: Vec<Vec<f64>>,
    pub sigma_prior: Vec<Vec<Vec<f64>>>,
    pub noise_sd: Vec<f64>,
    pub arrival: Vec<f64>,
    pub context: ContextDistribution,
}

impl From<&EnvTruth> for EnvFile {
    fn from(env: &EnvTruth) -> Self {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { m.row_iter().map(|r| r.iter().copied().collect()).collect() };
        EnvFile {
            n_instances: env.n_instances,
            n_arms: env.n_arms,
            dim: env.dim,
            beta: env
                .beta
                .iter()
                .map(|arms| arms.iter().map(|b| b.as_slice().to_vec()).collect())
                .collect(),
            beta0: env.beta0.iter().map(|b| b.as_slice().to_vec()).collect(),
            sigma_prior: env.sigma_prior.iter().map(rows).collect(),
            noise_sd: env.noise_sd.clone(),
            arrival: env.arrival.clone(),
            context: env.context,
        }
    }
}

/// Arrival probabilities must sum to one within this tolerance.
pub const ARRIVAL_TOLERANCE: f64 = 1e-12;

fn expect_len(key: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(EbmError::document(
            key,
            format!("expected length {expected}, found {got}"),
        ));
    }
    Ok(())
}

impl EnvFile {
    pub fn into_truth(self) -> Result<EnvTruth> {
        check_shape(self.n_instances, self.n_arms, self.dim)?;
        let (n, k, d) = (self.n_instances, self.n_arms, self.dim);

        expect_len("beta", n, self.beta.len())?;
        let mut beta = Vec::with_capacity(n);
        for (j, arms) in self.beta.into_iter().enumerate() {
            expect_len(&format!("beta[{j}]"), k, arms.len())?;
            let mut row = Vec::with_capacity(k);
            for (a, b) in arms.into_iter().enumerate() {
                expect_len(&format!("beta[{j}][{a}]"), d, b.len())?;
                row.push(DVector::from_vec(b));
            }
            beta.push(row);
        }

        expect_len("beta0", k, self.beta0.len())?;
        let mut beta0 = Vec::with_capacity(k);
        for (a, b) in self.beta0.into_iter().enumerate() {
            expect_len(&format!("beta0[{a}]"), d, b.len())?;
            beta0.push(DVector::from_vec(b));
        }

        expect_len("sigma_prior", k, self.sigma_prior.len())?;
        let mut sigma_prior = Vec::with_capacity(k);
        for (a, m) in self.sigma_prior.into_iter().enumerate() {
            let key = format!("sigma_prior[{a}]");
            expect_len(&key, d, m.len())?;
            for (r, row) in m.iter().enumerate() {
                expect_len(&format!("{key}[{r}]"), d, row.len())?;
            }
            let mat = DMatrix::from_row_iterator(d, d, m.into_iter().flatten());
            if (&mat - mat.transpose()).amax() > 1e-12 {
                return Err(EbmError::document(key, "matrix is not symmetric"));
            }
            if mat.clone().cholesky().is_none() {
                return Err(EbmError::document(key, "matrix is not positive definite"));
            }
            sigma_prior.push(mat);
        }

        expect_len("noise_sd", k, self.noise_sd.len())?;
        if let Some(bad) = self.noise_sd.iter().position(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(EbmError::document(
                format!("noise_sd[{bad}]"),
                "must be finite and nonnegative",
            ));
        }

        expect_len("arrival", n, self.arrival.len())?;
        if self.arrival.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(EbmError::document("arrival", "entries must be nonnegative"));
        }
        let total: f64 = self.arrival.iter().sum();
        if (total - 1.0).abs() > ARRIVAL_TOLERANCE {
            return Err(EbmError::document(
                "arrival",
                format!("probabilities sum to {total}, not 1"),
            ));
        }
        self.context.validate()?;

        Ok(EnvTruth {
            n_instances: n,
            n_arms: k,
            dim: d,
            beta,
            beta0,
            sigma_prior,
            noise_sd: self.noise_sd,
            arrival: self.arrival,
            context: self.context,
        })
    }
}
