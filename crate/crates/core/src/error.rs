use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("schema error in {path}: missing required column `{column}`")]
    Schema { path: PathBuf, column: String },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("numeric error in {layer}: {message}")]
    Numeric { layer: String, message: String },

    #[error("image error in {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged at epoch {epoch}, step {step}; last good checkpoint: {last_good}")]
    Divergence {
        epoch: usize,
        step: usize,
        last_good: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numeric(layer: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Numeric {
            layer: layer.into(),
            message: msg.into(),
        }
    }

    /// Stable, machine-parsable error class used by the CLI.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Config(_) => "config",
            Error::Validation(_) => "validation",
            Error::Schema { .. } => "schema",
            Error::Parse { .. } => "parse",
            Error::Numeric { .. } => "numeric",
            Error::Image { .. } => "image",
            Error::Checkpoint(_) => "checkpoint",
            Error::Divergence { .. } => "divergence",
        }
    }
}
