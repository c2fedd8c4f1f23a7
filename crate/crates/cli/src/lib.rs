//! Refinement studies for the orthotropic p-Laplacian: configuration, sweeps,
//! table output and comparison against stored reference tables.

pub mod config;
pub mod fixtures;
pub mod format;
pub mod study;

pub use config::{parse_config, Format, StudyConfig};
pub use fixtures::{diff_tables, paper_table, parse_csv, DiffRow};
pub use format::{emit_diff, emit_table, sci};
pub use study::{run_study, LevelReport, StudyOutcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// `--help` or `--version` output, not a failure.
    #[error("{0}")]
    Help(String),
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("fixture: {0}")]
    Fixture(String),
    #[error(transparent)]
    Core(#[from] orthofem::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;
