use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("simulation diverged on path {path} at step {step}")]
    SimulationDivergence { path: usize, step: usize },

    #[error("non-finite latent state at t = {time} (step {step})")]
    LatentDivergence { time: f64, step: usize },

    #[error("training diverged at epoch {epoch}: {reason}")]
    TrainingDivergence { epoch: usize, reason: String },

    #[error("estimation domain error: {0}")]
    EstimationDomain(String),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code for the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Data(_) | Error::Shape(_) | Error::MissingFile(_) | Error::Io(_) | Error::Json(_) => 3,
            Error::SimulationDivergence { .. }
            | Error::LatentDivergence { .. }
            | Error::TrainingDivergence { .. } => 4,
            Error::EstimationDomain(_) => 5,
        }
    }
}
