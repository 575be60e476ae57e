//! Experiment harness: single runs with checkpoint/resume, the toggle
//! ablation grid, baseline sweeps, the β oracle, and CSV/JSON output.

mod ablation;
mod config;
mod emit;
mod oracle;
mod run;
mod sweep;
pub mod validate;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use ablation::{
    early_stopping, run_ablation, summarize, AblationGrid, AblationRun, AblationSummaryRow,
    EarlyStop, Toggles,
};
pub use config::{ExperimentConfig, OptimizerSpec};
pub use emit::{
    emit_curves, read_csv, summarize_csv_dir, summarize_records, write_csv, write_summary,
    NamedRecord, RunSummary, Summary, CSV_HEADER, SUMMARY_FILE,
};
pub use oracle::{beta_bruteforce_oracle, beta_closed_form, beta_objective};
pub use run::{
    run_experiment, Checkpoint, OptimizerState, Row, Run, RunRecord, TerminalStatus,
    CHECKPOINT_SCHEMA_VERSION,
};
pub use sweep::{run_sweep, SweepGrid};

use crate::problems::ProblemError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("malformed input: {0}")]
    Format(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint schema version {found}, expected {expected}")]
    Schema { found: u32, expected: u32 },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("oracle: {0}")]
    Oracle(String),
}

impl HarnessError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn csv(path: &Path, source: csv::Error) -> Self {
        HarnessError::Csv {
            path: path.to_path_buf(),
            source,
        }
    }
}
