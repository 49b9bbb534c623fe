//! Crate-wide error type.
//!
//! Variants are grouped so a front end can map them onto exit codes:
//! [`Error::Io`] and [`Error::Config`] are environment/configuration
//! problems, everything else is a data problem.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("duplicate measurement key: protein `{protein_id}`, condition `{condition}`, replicate {replicate}, temperature {temperature}")]
    DuplicateKey {
        protein_id: String,
        condition: String,
        replicate: u32,
        temperature: f64,
    },

    #[error("unknown condition label `{label}` on line {line} (expected `{control}` or `{treatment}`)")]
    UnknownCondition {
        label: String,
        line: u64,
        control: String,
        treatment: String,
    },

    #[error("sample column {0} has no present abundance values")]
    EmptyColumn(String),

    #[error("sample column {0} has median 0, cannot normalize")]
    ZeroMedianColumn(String),

    #[error("{0}")]
    Data(String),

    #[error("GP fit failed: {0}")]
    Fit(String),

    #[error("truth label error: {0}")]
    Labels(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for configuration/environment failures, false for data failures.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
