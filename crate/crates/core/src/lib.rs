//! Empirical Bayes multi-bandits: hierarchical Gaussian posteriors shared
//! across bandit instances, hyperparameter estimation, the ebmTS and ebmUCB
//! policies with linear baselines, synthetic environments, and a seeded
//! simulation harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod empirical_bayes;
pub mod environment;
pub mod error;
pub mod experiment;
pub mod harness;
pub mod linalg;
pub mod policies;
pub mod posterior;

pub use error::{EbmError, Result};
