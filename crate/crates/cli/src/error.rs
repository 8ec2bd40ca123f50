use crate::scenario::ScenarioError;
use sld_forge::fock_oracle::OracleError;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("output path {path} is not writable: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("solver failure at t = {t}: {detail}")]
    Solver { t: f64, detail: String },
    #[error("oracle: {0}")]
    Oracle(#[from] OracleError),
    #[error("{failed} of {total} comparisons outside tolerance")]
    OutOfTolerance { failed: usize, total: usize },
    #[error("{failed} of {total} scenarios failed")]
    Sweep {
        failed: usize,
        total: usize,
        code: u8,
    },
}

impl CliError {
    /// 2 schema or configuration, 3 solver, 4 oracle breach, 1 tolerance miss.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Scenario(_) | CliError::Output { .. } | CliError::Usage(_) => 2,
            CliError::Solver { .. } => 3,
            CliError::Oracle(_) => 4,
            CliError::OutOfTolerance { .. } => 1,
            CliError::Sweep { code, .. } => *code,
        }
    }
}
