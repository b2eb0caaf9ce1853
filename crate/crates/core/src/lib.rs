//! Worst-privacy accounting for noisy federated learning.
//!
//! Gaussian differential privacy primitives live in [`tradeoff`] and
//! [`gauss`]; per-round sensitivity coefficients in [`schedules`]; the
//! interpolation bound in [`accountant`]; and an empirical check of the
//! sensitivity envelope in [`simulator`].

// `!(x > 0.0)` rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod config;
pub mod error;
pub mod exec;
pub mod gauss;
pub mod schedules;
pub mod simulator;
pub mod tradeoff;

pub use accountant::{account, calibrate_sigma, AccountingResult, CalibrationTarget};
pub use config::{CoefficientMode, FlConfig, MethodSpec};
pub use error::{Error, Result};
pub use exec::Execution;
pub use schedules::{CoefficientSeries, Schedule, ScheduleKind};
pub use tradeoff::{EpsDelta, GdpCurve, RenyiBudget};
