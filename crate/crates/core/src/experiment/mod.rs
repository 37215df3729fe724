//! Monte-Carlo trials, aggregation, scaling fits and the exhaustive
//! small-world oracle.

pub mod config;
pub mod explore;
pub mod stats;
pub mod trials;

pub use config::{ConfigIssue, ExperimentConfig};
pub use explore::{explore, ExploreConfig, ExploreReport};
pub use stats::{ratio_test, trial_seed, Aggregate, RatioFit, Summary};
pub use trials::{check_run, run_trial, run_trials, ExperimentError, TrialRecord};
