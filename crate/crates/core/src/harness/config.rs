use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::empirical_bayes::EmpiricalBayesConfig;
use crate::environment::{generate_hierarchical_env, generate_sparse_env, ArrivalMode, ContextDistribution, EnvTruth};
use crate::error::{EbmError, Result};
use crate::policies::{PolicyConfig, PolicyKind};

/// Independent random streams derived from one replication seed.
pub mod streams {
    pub const ENVIRONMENT: u64 = 0;
    pub const ARRIVAL: u64 = 1;
    pub const CONTEXT: u64 = 2;
    pub const REWARD: u64 = 3;
    pub const POLICY: u64 = 4;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn default_support() -> usize {
    1
}

fn default_delta_scale() -> f64 {
    1.0
}

/// Where the ground truth of a run comes from.
///
/// Generated environments use `env_seed` when given (one environment shared
/// by every replication); otherwise each replication draws its own from its
/// seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSource {
    Hierarchical {
        n_instances: usize,
        n_arms: usize,
        dim: usize,
        #[serde(default)]
        arrival: ArrivalMode,
        #[serde(default)]
        context: ContextDistribution,
        #[serde(default)]
        env_seed: Option<u64>,
    },
    Sparse {
        n_instances: usize,
        n_arms: usize,
        dim: usize,
        #[serde(default = "default_support")]
        support: usize,
        #[serde(default = "default_delta_scale")]
        delta_scale: f64,
        #[serde(default)]
        arrival: ArrivalMode,
        #[serde(default)]
        context: ContextDistribution,
        #[serde(default)]
        env_seed: Option<u64>,
    },
    File {
        path: PathBuf,
    },
}

impl EnvSource {
    pub fn resolve(&self, replication_seed: u64) -> Result<EnvTruth> {
        match self {
            EnvSource::Hierarchical {
                n_instances,
                n_arms,
                dim,
                arrival,
                context,
                env_seed,
            } => {
                let mut rng = stream_rng(env_seed.unwrap_or(replication_seed), streams::ENVIRONMENT);
                generate_hierarchical_env(*n_instances, *n_arms, *dim, *arrival, *context, &mut rng)
            }
            EnvSource::Sparse {
                n_instances,
                n_arms,
                dim,
                support,
                delta_scale,
                arrival,
                context,
                env_seed,
            } => {
                let mut rng = stream_rng(env_seed.unwrap_or(replication_seed), streams::ENVIRONMENT);
                generate_sparse_env(
                    *n_instances,
                    *n_arms,
                    *dim,
                    *support,
                    *delta_scale,
                    *arrival,
                    *context,
                    &mut rng,
                )
            }
            EnvSource::File { path } => EnvTruth::read(path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RegretMode {
    /// Regret of the realized instance at each step.
    #[default]
    Realized,
    /// Arrival-weighted counterfactual regret over all instances.
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Estimation {
    /// Estimate `Σ_k`, `σ_k²` from the data as it arrives.
    #[default]
    EmpiricalBayes,
    /// Inject the true `Σ_k`, `σ_k²` (ablation).
    FixedPrior,
}

/// Full description of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSource,
    pub policy: PolicyConfig,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub regret_mode: RegretMode,
    #[serde(default)]
    pub estimation: Estimation,
    #[serde(default)]
    pub empirical_bayes: EmpiricalBayesConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// `key=value` overrides already folded into this config, oldest first.
    #[serde(default)]
    pub applied_overrides: Vec<String>,
}

impl RunConfig {
    /// Balanced synthetic setting: N = 10, K = 5, d = 3, mixture contexts,
    /// n = 2000, seeds 0..100.
    pub fn synthetic(kind: PolicyKind, arrival: ArrivalMode) -> Self {
        RunConfig {
            env: EnvSource::Hierarchical {
                n_instances: 10,
                n_arms: 5,
                dim: 3,
                arrival,
                context: ContextDistribution::mixture(),
                env_seed: None,
            },
            policy: PolicyConfig::new(kind),
            horizon: 2000,
            seeds: (0..100).collect(),
            regret_mode: RegretMode::Realized,
            estimation: Estimation::EmpiricalBayes,
            empirical_bayes: EmpiricalBayesConfig::default(),
            output_dir: None,
            applied_overrides: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(EbmError::document("horizon", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(EbmError::document("seeds", "must not be empty"));
        }
        self.policy.validate()?;
        if !(self.empirical_bayes.eig_floor > 0.0) {
            return Err(EbmError::document("empirical_bayes.eig_floor", "must be positive"));
        }
        if !(self.empirical_bayes.noise_floor > 0.0) {
            return Err(EbmError::document("empirical_bayes.noise_floor", "must be positive"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Load from disk; a relative environment-file path is taken relative to
    /// the config file and stored absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| EbmError::io(path, e))?;
        let mut config = Self::from_json(&text)?;
        if let EnvSource::File { path: env_path } = &mut config.env {
            if env_path.is_relative() {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                let joined = base.join(&*env_path);
                *env_path = joined.canonicalize().unwrap_or(joined);
            }
        }
        Ok(config)
    }

    /// Apply dotted `key=value` overrides and record them.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = serde_json::to_value(self)?;
        for spec in overrides {
            apply_override(&mut doc, spec.as_ref())?;
        }
        let mut next: RunConfig = serde_json::from_value(doc)?;
        next.applied_overrides = self.applied_overrides.clone();
        next.applied_overrides
            .extend(overrides.iter().map(|s| s.as_ref().to_string()));
        next.validate()?;
        Ok(next)
    }
}

/// Short names accepted for common keys.
pub fn canonical_key(key: &str) -> &str {
    match key {
        "N" | "n_instances" => "env.n_instances",
        "K" | "n_arms" => "env.n_arms",
        "d" | "dim" => "env.dim",
        "context" => "env.context",
        "arrival" => "env.arrival",
        "policy" | "kind" => "policy.kind",
        "a" => "policy.a",
        "lambda" => "policy.lambda",
        other => other,
    }
}

fn parse_override_value(key: &str, raw: &str) -> Value {
    if key.ends_with("context") {
        if let Some(preset) = ContextDistribution::preset(raw) {
            return serde_json::to_value(preset).expect("context presets serialize");
        }
    }
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Set `key=value` inside a serialized config. The key must already exist.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| EbmError::invalid(format!("override `{spec}` is not key=value")))?;
    let key = canonical_key(key.trim());
    let value = parse_override_value(key, raw.trim());
    let mut slot = doc;
    for part in key.split('.') {
        slot = match slot {
            Value::Object(map) => map
                .get_mut(part)
                .ok_or_else(|| EbmError::document(key, "no such configuration key"))?,
            _ => return Err(EbmError::document(key, "no such configuration key")),
        };
    }
    *slot = value;
    Ok(())
}
