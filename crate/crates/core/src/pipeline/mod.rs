//! End-to-end experiment orchestration: ingest, PCA and k-means
//! initialization, training, evaluation and report emission.

mod config;
mod io;
mod report;
mod run;

pub use config::{parse_key_values, ExperimentConfig, ReportFormat, CONFIG_KEYS};
pub use io::{
    encode_features, format_labels, load_features, load_labels, parse_features_binary,
    parse_features_csv, parse_labels, write_features, DataError, FEATURE_MAGIC,
};
pub use report::{emit_report, format_scores, write_outputs, ExperimentReport, Timing};
pub use run::{execute, prepare, run_experiment, run_prepared, ExperimentOutcome, PreparedExperiment};

use std::path::PathBuf;

use thiserror::Error;

use crate::dtc::DtcError;
use crate::embedding::EmbeddingError;
use crate::metrics::MetricsError;

/// Failures labeled by the stage that raised them.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("ingest: {}: {source}", path.display())]
    Ingest { path: PathBuf, source: DataError },
    #[error("ingest: {0}")]
    Data(String),
    #[error("init: {0}")]
    Init(#[from] EmbeddingError),
    #[error("train: {0}")]
    Train(#[from] DtcError),
    #[error("eval: {0}")]
    Eval(#[from] MetricsError),
    #[error("output: {0}")]
    Output(String),
}

impl PipelineError {
    /// Process exit status: 2 for configuration problems, 4 for divergence,
    /// 3 for everything data-related.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Train(DtcError::Diverged { .. }) => 4,
            _ => 3,
        }
    }
}
