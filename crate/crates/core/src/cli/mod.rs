//! Command implementations behind the `ubant` binary.

pub mod commands;
pub mod config;
pub mod train;

use std::path::Path;

use thiserror::Error;

pub use commands::{
    cmd_eval, cmd_gen, cmd_stats, cmd_train, Dataset, EvalMode, Matrices, RunManifest, TrainOutcome,
};
pub use config::{sub_seed, EvalOptions, TrainConfig};
pub use train::{EpochSummary, StepLog, TrainError, TrainReport, Trainer};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Data(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Data(_) => 3,
            Self::Numerical(_) => 4,
        }
    }
}
