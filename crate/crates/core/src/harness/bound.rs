use crate::environment::EnvTruth;
use crate::error::{EbmError, Result};
use crate::linalg::{max_eigenvalue, min_eigenvalue};

use super::trace::RegretTrace;

/// Inputs of the frequentist regret bound for ebmUCB.
///
/// `lambda_1` and `lambda_d` bound the eigenvalues of every `Σ_k⁻¹` from
/// above and below. `n` and `n_j` are real so the bound can be evaluated at
/// non-integer horizons.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundParams {
    pub sigma: f64,
    pub lambda: f64,
    pub lambda_1: f64,
    pub lambda_d: f64,
    pub x_max: f64,
    pub b_max: f64,
    pub dim: usize,
    pub n_arms: usize,
    pub n: f64,
    /// Steps spent in each instance; its length is the number of instances.
    pub n_j: Vec<f64>,
    pub delta: f64,
}

/// The four constants multiplying the variance sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl BoundParams {
    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(EbmError::invalid(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        let positive = [
            ("sigma", self.sigma),
            ("lambda", self.lambda),
            ("lambda_1", self.lambda_1),
            ("lambda_d", self.lambda_d),
            ("x_max", self.x_max),
            ("b_max", self.b_max),
            ("n", self.n),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EbmError::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.dim == 0 || self.n_arms == 0 || self.n_j.is_empty() {
            return Err(EbmError::invalid("dim, n_arms and the instance count must be positive"));
        }
        if self.n_j.iter().any(|&v| !(v >= 0.0)) {
            return Err(EbmError::invalid("per-instance step counts must be nonnegative"));
        }
        Ok(())
    }

    pub fn n_instances(&self) -> usize {
        self.n_j.len()
    }

    pub fn constants(&self) -> BoundConstants {
        let s2 = self.sigma * self.sigma;
        let x2 = self.x_max * self.x_max;
        let inv_d = 1.0 / self.lambda_d;
        let c1 = inv_d * x2 / (1.0 + inv_d * x2 / s2).ln();
        let c2 = inv_d * x2 / (s2 * self.dim as f64);
        let shared = inv_d * inv_d * self.lambda_1 * self.lambda_1 * x2 / self.lambda;
        let c3 = shared * (1.0 + inv_d * x2 / s2) / (1.0 + shared / s2).ln();
        let c4 = self.lambda_1 / self.lambda;
        BoundConstants { c1, c2, c3, c4 }
    }

    /// Confidence radius after `t` steps.
    pub fn confidence_radius(&self, t: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        let d = self.dim as f64;
        let n_inst = self.n_instances() as f64;
        let num = self.lambda.max(s2 * self.lambda_1) + t * self.x_max * self.x_max / d;
        let den = (self.lambda * self.lambda_d * s2).sqrt() * self.delta;
        let log_term = (num / den).ln().max(0.0);
        self.sigma * n_inst * self.b_max * self.lambda_1.sqrt()
            + 2.0 * (s2 * d * (self.lambda_1 / self.lambda).max(1.0) * log_term).sqrt()
    }
}

/// Evaluate the high-probability cumulative regret bound of ebmUCB.
pub fn theoretical_bound_ucb(params: &BoundParams) -> Result<f64> {
    params.validate()?;
    let BoundConstants { c1, c2, c3, c4 } = params.constants();
    let n = params.n;
    let dk = (params.dim * params.n_arms) as f64;
    let n_inst = params.n_instances() as f64;
    let instance_term: f64 = params.n_j.iter().map(|&nj| (1.0 + c2 * nj).ln()).sum();
    let root = (c1 * n * dk * instance_term + c3 * n * dk * (1.0 + c4 * n_inst).ln()).sqrt();
    let residual = 2.0 * params.x_max * params.b_max * params.n_arms as f64 * n_inst * n * params.delta;
    Ok(2.0 * params.confidence_radius(n) * root + residual)
}

/// Bound inputs for a finished episode: eigenvalue bounds and `b_max` from
/// the true environment, `x_max` from the realized contexts, `σ` the largest
/// noise scale.
pub fn bound_params_for(env: &EnvTruth, trace: &RegretTrace, lambda: f64, delta: f64) -> BoundParams {
    let lambda_1 = env
        .sigma_prior
        .iter()
        .map(|s| 1.0 / min_eigenvalue(s))
        .fold(f64::NEG_INFINITY, f64::max);
    let lambda_d = env
        .sigma_prior
        .iter()
        .map(|s| 1.0 / max_eigenvalue(s))
        .fold(f64::INFINITY, f64::min);
    let sigma = env.noise_sd.iter().copied().fold(0.0, f64::max);
    BoundParams {
        sigma,
        lambda,
        lambda_1,
        lambda_d,
        x_max: trace.x_max,
        b_max: env.b_max(),
        dim: env.dim,
        n_arms: env.n_arms,
        n: trace.horizon() as f64,
        n_j: trace.arrivals().into_iter().map(|c| c as f64).collect(),
        delta,
    }
}
