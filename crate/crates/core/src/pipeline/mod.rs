//! Two-stage orchestration behind the `ssml` binary: configuration, data
//! preparation, metrics CSVs and the diagnostic subcommands.

mod commands;
mod config;
mod metrics;

pub use commands::{
    accuracy_drop, cmd_augment_preview, cmd_compare, cmd_eval, cmd_pretrain, cmd_prob, cmd_sweep_temperature,
    cmd_train, prepare_data, ArmRun, CompareReport, PreparedData, PreviewReport, ProbReport, QueryProbe, TrainReport,
};
pub use config::{DataSource, InitKind, ModelKind, RunConfig, KEYS};
pub use metrics::{csv_field, sig6, MetricsRow, MetricsWriter, METRICS_HEADER};

use std::path::Path;

use crate::dataset::DataError;
use crate::image_ops::ImageError;
use crate::meta::MetaError;
use crate::models::{CheckpointError, ModelError};
use crate::tensor::TensorError;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical divergence: {0}")]
    Divergence(String),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Data(_) => 2,
            PipelineError::Divergence(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            PipelineError::Config(m) | PipelineError::Data(m) | PipelineError::Divergence(m) => m,
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        PipelineError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<MetaError> for PipelineError {
    fn from(e: MetaError) -> Self {
        match e {
            MetaError::Config(_) => PipelineError::Config(e.to_string()),
            // inputs are finite, so a non-finite activation means training blew up
            MetaError::Divergence { .. }
            | MetaError::NonFiniteGradient { .. }
            | MetaError::Tensor(TensorError::NonFinite { .. })
            | MetaError::Model(ModelError::Tensor(TensorError::NonFinite { .. })) => {
                PipelineError::Divergence(e.to_string())
            }
            MetaError::Model(m) => m.into(),
            MetaError::Data(_) | MetaError::Tensor(_) => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for PipelineError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<DataError> for PipelineError {
    fn from(e: DataError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<CheckpointError> for PipelineError {
    fn from(e: CheckpointError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<ImageError> for PipelineError {
    fn from(e: ImageError) -> Self {
        PipelineError::Data(e.to_string())
    }
}
