//! Experiment harness: welfare metrics over the three policy classes,
//! multi-seed experiment runs with CSV reports, and the `promptsim` CLI.

pub mod cli;
pub mod experiment;
pub mod metrics;

pub use experiment::{
    aggregate, make_backend, run_experiment, run_instance, solve_policies, utility_histogram, write_reports,
    AggregateRow, BackendKind, ExperimentConfig, HistogramRow, InstanceResult, Scenario, METRIC_NAMES,
};
pub use metrics::{compute_metrics, relative_gap, stage_welfare, user_utilities, MetricsReport, PerPolicy};

use promptsim_core::CoreError;
use promptsim_joint::JointError;
use promptsim_mip::MipError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("external backend requested but no solver command is configured")]
    BackendUnavailable,
    #[error("metrics: {0}")]
    Metrics(String),
    #[error("trajectory replay failed: {0}")]
    Replay(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Joint(#[from] JointError),
    #[error(transparent)]
    Mip(#[from] MipError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
