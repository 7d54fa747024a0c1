//! Study runner for the `pamfbo` optimizers: JSON configurations in,
//! convergence CSVs and summary tables out.

pub mod compare;
pub mod config;
pub mod study;

pub use compare::{compare, improvement, load_summary, CompareError, Table};
pub use config::{ConfigError, ProblemConfig, StudyConfig, OUTPUT_ROOT_ENV};
pub use study::{
    read_history_csv, run_study, summarize, write_history_csv, StudyError, StudyOutcome,
    StudySummary,
};

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

impl StudyError {
    pub fn exit_code(&self) -> i32 {
        match self {
            StudyError::Config(_) => EXIT_CONFIG,
            StudyError::Output { .. } | StudyError::Replications { .. } => EXIT_RUNTIME,
        }
    }
}
