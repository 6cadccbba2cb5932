//! Scenario files, their validation and execution for the `sqcool` binary.

// negated comparisons deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod run;
pub mod scenario;
pub mod table;

pub use error::CliError;
pub use run::{run_scenario, RunOptions, RunReport};
pub use scenario::{Output, Scenario, Violation};

/// Loads a scenario and returns every schema and consistency violation.
pub fn validate_file(path: &std::path::Path) -> Result<Vec<Violation>, CliError> {
    let (scenario, _) = scenario::load(path)?;
    Ok(scenario.violations())
}
