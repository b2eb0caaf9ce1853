//! `fedgdp` command-line tool.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage or configuration error,
//! 3 accounting numeric error, 4 calibration failure, 5 simulation abort.

mod args;
mod commands;
mod output;
mod settings;

use std::ffi::OsString;

use clap::Parser;
use fedgdp_core::Error as CoreError;

pub use args::Cli;
pub use output::RunManifest;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Accounting(String),
    #[error("{0}")]
    Calibration(String),
    #[error("{0}")]
    Simulation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Accounting(_) => 3,
            CliError::Calibration(_) => 4,
            CliError::Simulation(_) => 5,
        }
    }

    pub(crate) fn usage(e: CoreError) -> Self {
        CliError::Usage(e.to_string())
    }

    /// Configuration errors are usage errors; numeric failures are accounting errors.
    pub(crate) fn accounting(e: CoreError) -> Self {
        match e {
            CoreError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Accounting(e.to_string()),
        }
    }

    pub(crate) fn calibration(e: CoreError) -> Self {
        match e {
            CoreError::Config(_) => CliError::Usage(e.to_string()),
            CoreError::NumericRange(_) | CoreError::DegenerateOptimum { .. } => {
                CliError::Accounting(e.to_string())
            }
            _ => CliError::Calibration(e.to_string()),
        }
    }

    pub(crate) fn simulation(e: CoreError) -> Self {
        match e {
            CoreError::Config(_) | CoreError::Domain(_) => CliError::Usage(e.to_string()),
            CoreError::NumericRange(_) | CoreError::DegenerateOptimum { .. } => {
                CliError::Accounting(e.to_string())
            }
            _ => CliError::Simulation(e.to_string()),
        }
    }
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let recorded: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::dispatch(cli, &recorded) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("fedgdp: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_documented_codes() {
        let cfg = CoreError::Config("x".into());
        let dom = CoreError::Domain("x".into());
        let num = CoreError::NumericRange("x".into());
        let deg = CoreError::DegenerateOptimum { round: 1, value: 0.0 };
        let abort = CoreError::SimulationAborted { round: 3, reason: "x".into() };
        let nan = CoreError::NonFinite { round: 3, step: 1 };

        assert_eq!(CliError::accounting(cfg.clone()).exit_code(), 2);
        assert_eq!(CliError::accounting(num.clone()).exit_code(), 3);
        assert_eq!(CliError::accounting(deg.clone()).exit_code(), 3);
        assert_eq!(CliError::calibration(cfg.clone()).exit_code(), 2);
        assert_eq!(CliError::calibration(dom.clone()).exit_code(), 4);
        assert_eq!(CliError::calibration(num.clone()).exit_code(), 3);
        assert_eq!(CliError::simulation(cfg).exit_code(), 2);
        assert_eq!(CliError::simulation(dom).exit_code(), 2);
        assert_eq!(CliError::simulation(num).exit_code(), 3);
        assert_eq!(CliError::simulation(abort.clone()).exit_code(), 5);
        assert_eq!(CliError::simulation(nan).exit_code(), 5);
        assert!(CliError::simulation(abort).to_string().contains("round 3"));
    }

    #[test]
    fn parse_failures_exit_two_and_help_zero() {
        assert_eq!(run(["fedgdp", "account", "--K", "x"]), 2);
        assert_eq!(run(["fedgdp", "--help"]), 0);
    }
}
