//! Configuration-driven experiments: simulate, train, evaluate, bias study.
//!
//! Every stage reads its inputs from files written by the previous one and
//! records what it wrote in a manifest with SHA-256 checksums.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod pipeline;

use serde::Serialize;
use thiserror::Error;

use crate::classifiers::ClassifierError;
use crate::evaluation::EvaluationError;
use crate::resampling::ResampleError;
use crate::surrender::SurrenderError;

pub use commands::{cmd_bias_study, cmd_evaluate, cmd_simulate, cmd_train, Overrides};
pub use config::ExperimentConfig;
pub use manifest::RunManifest;
pub use pipeline::{prepare, Prepared, SimulationSpec};

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Surrender(#[from] SurrenderError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error("every model failed: {0}")]
    AllModelsFailed(String),
}

impl LabError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config { .. } => "config",
            Self::Io { .. } => "io",
            Self::Format { .. } => "format",
            Self::Surrender(_) => "surrender",
            Self::Classifier(_) => "classifier",
            Self::Resample(_) => "resampling",
            Self::Evaluation(_) => "evaluation",
            Self::AllModelsFailed(_) => "training",
        }
    }

    /// One-line JSON object for machine consumption.
    pub fn summary(&self) -> ErrorSummary {
        ErrorSummary {
            status: "error",
            kind: self.kind(),
            path: match self {
                Self::Config { path, .. } | Self::Io { path, .. } | Self::Format { path, .. } => Some(path.clone()),
                _ => None,
            },
            message: self.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorSummary {
    pub status: &'static str,
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub message: String,
}
