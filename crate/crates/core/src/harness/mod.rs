//! The sequential game, regret bookkeeping, replication and diagnostics.

pub mod bound;
pub mod config;
pub mod episode;
pub mod oracle;
pub mod output;
pub mod trace;

pub use bound::{bound_params_for, theoretical_bound_ucb, BoundConstants, BoundParams};
pub use config::{stream_rng, streams, EnvSource, Estimation, RegretMode, RunConfig};
pub use episode::{run_episode, run_replications, weighted_regret_trace, Agent};
pub use oracle::oracle_joint_posterior;
pub use output::execute_run;
pub use trace::{AggregateResult, CurveStats, RegretTrace, StepRecord};
