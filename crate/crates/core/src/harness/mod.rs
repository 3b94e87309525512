//! Task harness: manifests, the dataset registry, Lite sampling, setup,
//! isolated verification, metrics and reports.

pub mod convert;
mod lite;
mod metrics;
pub mod registry;
mod setup;
mod task;
mod verify;

use thiserror::Error;

pub use lite::{full_registry_instances, sample_lite, InstanceRef, LITE_PER_DATASET};
pub use metrics::{
    aggregate, compute_metric, emit_dataset_table, emit_report, CategoryReport, CategoryScore,
    RawMetric, ReportFormat,
};
pub use registry::{dataset, Category, DatasetInfo, MetricRule, DATASETS};
pub use setup::{prepare_backend, sim_config};
pub use task::{
    load_dir, load_taskspec, load_taskspec_path, Attachment, FileContent, Resources, SuccessRule,
    TaskSpec, VerifierSpec, MANIFEST_FILE,
};
pub use verify::{evaluate, RewardError, RewardReport, VERIFIER_ROOT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unknown dataset: {0}")]
    UnknownDataset(String),
    #[error("io: {0}")]
    Io(String),
    #[error("setup command {command:?} failed with exit {exit_code}: {output}")]
    SetupFailed {
        command: String,
        exit_code: i32,
        output: String,
    },
    #[error("missing dataset: {0}")]
    MissingDataset(String),
    #[error("dataset {dataset} has {have} instances, fewer than the Lite sample size")]
    InsufficientInstances { dataset: String, have: usize },
    #[error("metric shape mismatch: {0}")]
    ShapeMismatch(String),
}
