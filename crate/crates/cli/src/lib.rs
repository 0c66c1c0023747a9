//! Experiment runner for the `twoscale` training library: runs a matrix of
//! (loss variant, η, seed) cells on one dataset, writes per-run logs and
//! reports, and tabulates differences between reports.

pub mod compare;
pub mod config;
pub mod runner;

pub use compare::{compare, compare_files, flatten_report};
pub use config::{parse_config, Cell, Cli, Command, CompareArgs, DatasetKind, ExperimentConfig, RunArgs};
pub use runner::{load_data, run_matrix, CellReport, CellStatus, MatrixSummary};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or configuration; nothing was run.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] twoscale::Error),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub(crate) fn io(path: impl Into<std::path::PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// Exit status of a matrix in which some cells failed.
pub const EXIT_PARTIAL: i32 = 3;
