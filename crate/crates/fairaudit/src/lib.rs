//! Files, scorers and experiment running for the `fairaudit` command line.
//! The algorithms live in `fairaudit-core`.

pub mod config;
pub mod exec;
pub mod formats;
pub mod remote;
pub mod runner;
pub mod scoring;

use fairaudit_core::harness::HarnessError;
use fairaudit_core::BlackBoxError;
use thiserror::Error;

pub use fairaudit_core as core;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Format(#[from] formats::FormatError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    BlackBox(#[from] BlackBoxError),
    #[error("{strategy} seed {seed}: {requested} distinct ids requested but {reported} queries reported")]
    Accounting {
        strategy: String,
        seed: u64,
        requested: usize,
        reported: usize,
    },
}

impl AppError {
    /// 2 for configuration problems, 3 for everything that went wrong while
    /// running.
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) | AppError::Harness(HarnessError::InvalidConfig(_)) => 2,
            _ => 3,
        }
    }
}

impl From<remote::RemoteConfigError> for AppError {
    fn from(e: remote::RemoteConfigError) -> Self {
        AppError::Config(e.to_string())
    }
}
