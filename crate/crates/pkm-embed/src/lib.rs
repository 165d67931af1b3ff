//! File formats, validation suites and experiment runner behind the
//! `pkm-embed` command-line tool.

use std::path::PathBuf;

use pkm_core::irsbot2::run_experiment_with;

pub mod config;
pub mod model_file;
pub mod output;
pub mod validate;

pub use config::RunConfig;
pub use validate::SuiteReport;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("output error: {0}")]
    Io(String),
    #[error("validation failed: {0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Model(_) => 3,
            CliError::Solver(_) => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub csv: PathBuf,
    pub rows: usize,
}

/// Runs the configured experiment and writes its CSV file. A solver failure
/// leaves the samples solved so far, an error marker and a diagnostics file.
pub fn run(config: &RunConfig) -> Result<RunSummary, CliError> {
    let r = config.resolve()?;
    let report = run_experiment_with(&r.model, r.kind, &r.spec, &r.settings, r.solver).map_err(|e| CliError::Config(e.to_string()))?;
    let n_vars: Vec<usize> = r.model.limbs.iter().map(|l| l.n_vars()).collect();
    let w = output::write_report(&config.out, &report, &n_vars, r.model.task_dof())?;
    match (&report.failure, &w.failure) {
        (Some(e), _) => Err(CliError::Solver(e.to_string())),
        (None, Some(_)) => Err(CliError::Solver(format!("non-finite value after {} samples", w.rows))),
        (None, None) => Ok(RunSummary { csv: w.csv, rows: w.rows }),
    }
}

/// Runs the selected validation suites.
pub fn validate(config: &RunConfig) -> Result<Vec<SuiteReport>, CliError> {
    let suites = validate::select(&config.validate.suites)?;
    if config.validate.states == 0 {
        return Err(CliError::Config("validation needs at least one state".into()));
    }
    let r = config.resolve()?;
    let mut v = validate::Validator::new(&r.model, r.spec, r.settings, config.validate.states, config.validate.seed);
    suites.iter().map(|s| v.run(s)).collect()
}
