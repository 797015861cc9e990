//! Std companion of `fsvjj-core`: JSON experiment configs, a rayon block
//! executor, CSV reports and the study drivers behind the `fsvjj` binary.

pub mod config;
pub mod exec;
pub mod report;
pub mod study;

pub use fsvjj_core as core;

pub use config::{ExperimentConfig, StudyConfig, SweepVariable};
pub use exec::Parallel;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] fsvjj_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 2 for bad input, 1 for IO trouble.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Csv(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
