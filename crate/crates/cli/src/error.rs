use std::fmt;
use std::process::ExitCode;

use sqcool_core::{DspError, FitError, ModelError, SimError};
use thiserror::Error;

use crate::scenario::Violation;

/// Schema and physics violations, one per line.
#[derive(Debug, Clone, PartialEq)]
pub struct Violations(pub Vec<Violation>);

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("invalid scenario:\n{}", Violations(.0.clone()))]
    Schema(Vec<Violation>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Analysis(#[from] DspError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    /// Process exit status; 2 is left to argument parsing.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 3,
            CliError::Schema(_) => 4,
            CliError::Model(_) => 5,
            CliError::Simulation(SimError::LoopUnstable { .. }) => 6,
            CliError::Simulation(_) => 5,
            CliError::Analysis(_) => 7,
            CliError::Fit(_) => 8,
        }
    }

    pub fn exit(&self) -> ExitCode {
        ExitCode::from(self.exit_code())
    }
}
