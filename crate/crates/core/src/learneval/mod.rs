//! Linear classification, evaluation metrics and the experiment harness.

mod experiment;
mod metrics;
mod svm;

pub use experiment::{
    list_images, mean_rates, run_experiment, Aggregate, ExperimentConfig, PooledRoc, Report, Stat,
    SweepResult, TrialResult,
};
pub use metrics::{
    metrics, metrics_with, roc, trapezoid, ConfusionCounts, Metrics, PrecisionDenominator,
    RocSummary,
};
pub use svm::{train_svm, LinearModel, SvmConfig};
