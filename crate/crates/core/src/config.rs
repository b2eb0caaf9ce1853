//! Accounting context shared by `schedules`, `accountant` and the simulator.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::schedules::Schedule;

/// Local update rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MethodSpec {
    FedAvg,
    /// Proximal local objective with coefficient `alpha`.
    FedProx { alpha: f64 },
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::FedAvg => "fedavg",
            MethodSpec::FedProx { .. } => "fedprox",
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            MethodSpec::FedAvg => None,
            MethodSpec::FedProx { alpha } => Some(alpha),
        }
    }
}

/// How the per-round sensitivity coefficients are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientMode {
    /// Evaluate the learning-rate recursions directly.
    Exact,
    /// Use the closed-form bounds that the theorems are stated in.
    #[serde(rename = "table")]
    TableForm,
}

/// Full accounting context for one federated training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlConfig {
    /// Number of clients `m`, all active every round.
    pub clients: usize,
    /// Local steps per round `K`.
    pub local_steps: usize,
    /// Communication rounds `T`.
    pub rounds: usize,
    /// Clipping norm `V`.
    pub clip_norm: f64,
    /// Per-client Gaussian noise standard deviation.
    pub sigma: f64,
    /// Smoothness constant `L` of the local objectives.
    pub smoothness: f64,
    pub method: MethodSpec,
    pub schedule: Schedule,
    pub mode: CoefficientMode,
}

impl FlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return config("client count m must be at least 1");
        }
        if self.local_steps == 0 {
            return config("local steps K must be at least 1");
        }
        if self.rounds == 0 {
            return config("rounds T must be at least 1");
        }
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return config(format!("clip norm V must be positive, got {}", self.clip_norm));
        }
        if !(self.sigma > 0.0) || self.sigma.is_nan() {
            return config(format!("noise sigma must be positive, got {}", self.sigma));
        }
        if !(self.smoothness > 0.0 && self.smoothness.is_finite()) {
            return config(format!("smoothness L must be positive, got {}", self.smoothness));
        }
        self.schedule.validate()?;
        if let MethodSpec::FedProx { alpha } = self.method {
            if !(alpha > self.smoothness) {
                return config(format!(
                    "FedProx requires alpha > L (alpha = {alpha}, L = {})",
                    self.smoothness
                ));
            }
        }
        Ok(())
    }

    /// Same configuration with a different noise level.
    pub fn with_sigma(&self, sigma: f64) -> Self {
        FlConfig { sigma, ..self.clone() }
    }

    pub fn with_rounds(&self, rounds: usize) -> Self {
        FlConfig { rounds, ..self.clone() }
    }
}
