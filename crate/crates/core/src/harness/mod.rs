//! Experiment runner, validation suite and their configuration.

mod config;
mod experiment;
mod plot;
mod validate;

pub use config::{Algorithm, ExperimentConfig};
pub use experiment::{
    build_setup, run_cells, run_experiment, run_selector, summarize, write_results_csv, write_summary_csv,
    ExperimentRecord, Setup, SummaryRow,
};
pub use plot::{plot_errors, plot_times};
pub use validate::{validate_suite, CheckStatus, ValidationCheck, ValidationReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invariant failure: {0}")]
    Invariant(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Invariant(_) => 2,
            HarnessError::Runtime(_) => 3,
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}
