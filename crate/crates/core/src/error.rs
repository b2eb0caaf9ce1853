use thiserror::Error;

/// Errors produced by the accounting and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The accounting configuration violates a precondition (e.g. `alpha <= L`).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A quantity left the representable range even in log space.
    #[error("numeric range error: {0}")]
    NumericRange(String),

    /// The Cauchy-Schwarz optimum hit a vanishing denominator during lambda recovery.
    #[error("degenerate optimum at round {round}: denominator {value:e}")]
    DegenerateOptimum { round: usize, value: f64 },

    /// Local training produced a non-finite loss or gradient.
    #[error("non-finite value in local update at round {round}, step {step}")]
    NonFinite { round: usize, step: usize },

    /// The federated simulation diverged.
    #[error("simulation aborted at round {round}: {reason}")]
    SimulationAborted { round: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
