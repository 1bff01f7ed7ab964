//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

use crate::data::DataError;
use crate::expr::ExprError;
use crate::featsel::FeatselError;
use crate::gp::GpError;
use crate::metrics::MetricsError;
use crate::mlp::MlpError;
use crate::pvsynth::SynthError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Featsel(#[from] FeatselError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("model: {0}")]
    Model(String),
    #[error("hybrid violates the convexity bound: {0}")]
    Convexity(String),
    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

/// Broad classes used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input data, configuration or files.
    Data,
    /// A bug or a numerical failure inside an algorithm.
    Internal,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with the name of the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Stage { source, .. } => source.class(),
            Error::Mlp(MlpError::Divergence { .. }) | Error::Convexity(_) => ErrorClass::Internal,
            _ => ErrorClass::Data,
        }
    }
}

/// Attaches a stage name to any error convertible into [`Error`].
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T, E: Into<Error>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.into().in_stage(stage))
    }
}
