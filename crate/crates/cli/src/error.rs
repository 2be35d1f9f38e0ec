use std::path::{Path, PathBuf};

use qgan::critic::CriticError;
use qgan::metrics::MetricsError;
use qgan::mps::MpsError;
use qgan::pipeline::PipelineError;
use qgan::trainer::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.as_ref().to_path_buf();
        move |source| CliError::Io { path, source }
    }

    pub fn validation(msg: impl std::fmt::Display) -> CliError {
        CliError::Validation(msg.to_string())
    }
}

/// Attaches `path` to I/O failures and classifies everything else.
pub fn pipeline_error(path: impl AsRef<Path>, e: PipelineError) -> CliError {
    match e {
        PipelineError::Io(source) => CliError::Io { path: path.as_ref().to_path_buf(), source },
        PipelineError::MissingFile(p) => CliError::Io {
            path: p,
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        },
        other => CliError::Validation(format!("{}: {other}", path.as_ref().display())),
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteLoss { .. } => CliError::Numerical(e.to_string()),
            TrainError::Pipeline(PipelineError::Io(source)) => CliError::Io { path: PathBuf::new(), source },
            TrainError::Critic(CriticError::Io(source)) => CliError::Io { path: PathBuf::new(), source },
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<MpsError> for CliError {
    fn from(e: MpsError) -> Self {
        CliError::Validation(e.to_string())
    }
}
