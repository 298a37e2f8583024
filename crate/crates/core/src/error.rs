use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the training, encoding and evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("ill-posed Sylvester equation: shifted system singular at shift {shift:e}")]
    IllPosedSylvester { shift: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("degenerate kernel bandwidth: {0}")]
    DegenerateSigma(String),

    #[error(
        "objective increased at iteration {iteration} after {step} update: {before:e} -> {after:e}\n{breakdown}"
    )]
    ObjectiveIncrease {
        iteration: usize,
        step: &'static str,
        before: f64,
        after: f64,
        breakdown: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
