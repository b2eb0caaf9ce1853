//! Learning-rate schedules and the per-round sensitivity coefficients.
//!
//! One round of local training maps a gap `d` between two global models to
//! at most `rho_t * d + gamma_t`, where `rho_t` comes from model sensitivity
//! (same data, different start) and `gamma_t` from data sensitivity (same
//! start, one sample replaced). [`coefficients`] produces that series either
//! by evaluating the learning-rate recursions exactly or in the closed table
//! form that the worst-privacy theorems are written in.

use serde::{Deserialize, Serialize};

use crate::config::{CoefficientMode, FlConfig, MethodSpec};
use crate::error::{config, domain, Error, Result};

/// Upper end of the admissible range for the cyclic constant `c`.
pub const C_CONST_MAX: f64 = 1.543;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// `eta = mu`
    Constant,
    /// `eta = mu / (k + 1)`, restarted every round
    Cyclic,
    /// `eta = mu / (t + 1)`, constant within a round
    Stagewise,
    /// `eta = mu / (t K + k + 1)`
    Continuous,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::Cyclic => "cyclic",
            ScheduleKind::Stagewise => "stagewise",
            ScheduleKind::Continuous => "continuous",
        }
    }
}

/// A local learning-rate policy with base rate `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub base_rate: f64,
    /// Override for the cyclic constant `c`; derived from `K` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_const: Option<f64>,
    /// Override for the continuous-decay constant `z`; derived when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_const: Option<f64>,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, base_rate: f64) -> Result<Self> {
        let s = Schedule { kind, base_rate, c_const: None, z_const: None };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(base_rate: f64) -> Self {
        Schedule { kind: ScheduleKind::Constant, base_rate, c_const: None, z_const: None }
    }

    pub fn with_c(mut self, c: f64) -> Result<Self> {
        self.c_const = Some(c);
        self.validate()?;
        Ok(self)
    }

    pub fn with_z(mut self, z: f64) -> Result<Self> {
        self.z_const = Some(z);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_rate > 0.0 && self.base_rate.is_finite()) {
            return config(format!("base learning rate must be positive, got {}", self.base_rate));
        }
        if let Some(c) = self.c_const {
            if !(1.0..C_CONST_MAX).contains(&c) {
                return config(format!("cyclic constant c must lie in [1, {C_CONST_MAX}), got {c}"));
            }
        }
        if let Some(z) = self.z_const {
            if !(z > 1.0 && z.is_finite()) {
                return config(format!("continuous-decay constant z must exceed 1, got {z}"));
            }
        }
        Ok(())
    }

    /// Learning rate `eta_{k,t}` of local step `k` in round `t`.
    pub fn lr_at(&self, t: usize, k: usize, local_steps: usize) -> f64 {
        let mu = self.base_rate;
        match self.kind {
            ScheduleKind::Constant => mu,
            ScheduleKind::Cyclic => mu / (k as f64 + 1.0),
            ScheduleKind::Stagewise => mu / (t as f64 + 1.0),
            ScheduleKind::Continuous => mu / ((t * local_steps + k) as f64 + 1.0),
        }
    }

    /// `sum_{k<K} eta_{k,t}`.
    pub fn lr_sum(&self, t: usize, local_steps: usize) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.base_rate * local_steps as f64,
            ScheduleKind::Stagewise => self.base_rate * local_steps as f64 / (t as f64 + 1.0),
            _ => (0..local_steps).map(|k| self.lr_at(t, k, local_steps)).sum(),
        }
    }

    /// Model-sensitivity learning-rate function
    /// `eta(K,t) = sum_k eta_k prod_{j<k} (1 + eta_j L)`.
    pub fn eta_fn(&self, t: usize, local_steps: usize, smoothness: f64) -> f64 {
        let mut growth = 1.0;
        let mut total = 0.0;
        for k in 0..local_steps {
            let eta = self.lr_at(t, k, local_steps);
            total += eta * growth;
            growth *= 1.0 + eta * smoothness;
        }
        total
    }

    /// `ln(1 + eta(K,t) L) = sum_k ln(1 + eta_k L)`; the product telescopes.
    fn log_growth(&self, t: usize, local_steps: usize, smoothness: f64) -> f64 {
        (0..local_steps)
            .map(|k| (self.lr_at(t, k, local_steps) * smoothness).ln_1p())
            .sum()
    }

    /// Ratio `z_t` matching the round-`t` accumulation to `z ln((t+2)/(t+1))`.
    pub fn z_at(&self, t: usize, local_steps: usize) -> f64 {
        let acc = self.lr_sum(t, local_steps) / self.base_rate;
        acc / (1.0 / (t as f64 + 1.0)).ln_1p()
    }
}

/// Harmonic-to-log ratio `c = H_K / ln(K + 1)`.
pub fn derive_c(local_steps: usize) -> Result<f64> {
    if local_steps == 0 {
        return domain("derive_c requires K >= 1");
    }
    let harmonic: f64 = (1..=local_steps).rev().map(|k| 1.0 / k as f64).sum();
    Ok(harmonic / (local_steps as f64).ln_1p())
}

/// Per-round `z_t` for the continuous-decay schedule over `rounds` rounds.
pub fn z_per_round(schedule: &Schedule, local_steps: usize, rounds: usize) -> Vec<f64> {
    (0..rounds).map(|t| schedule.z_at(t, local_steps)).collect()
}

/// Aggregate `z` used by the table form: the override if given, otherwise
/// the maximum of `z_t` over the horizon.
pub fn aggregate_z(schedule: &Schedule, local_steps: usize, rounds: usize) -> f64 {
    schedule.z_const.unwrap_or_else(|| {
        (0..rounds)
            .map(|t| schedule.z_at(t, local_steps))
            .fold(f64::NEG_INFINITY, f64::max)
    })
}

/// Cyclic constant used by the table form.
pub fn effective_c(schedule: &Schedule, local_steps: usize) -> Result<f64> {
    match schedule.c_const {
        Some(c) => Ok(c),
        None => derive_c(local_steps),
    }
}

/// Per-round sensitivity coefficients. `rho` is stored as `ln rho` so long
/// horizons never overflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSeries {
    pub log_rho: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Mode actually used; may be `TableForm` when `Exact` was requested
    /// for a combination that only has the table caps.
    pub mode: CoefficientMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_used: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_used: Option<f64>,
}

impl CoefficientSeries {
    /// Builds a series from explicit `rho` and `gamma` values.
    pub fn from_values(rho: &[f64], gamma: &[f64]) -> Result<Self> {
        if rho.len() != gamma.len() {
            return domain(format!("rho has {} entries, gamma has {}", rho.len(), gamma.len()));
        }
        let s = CoefficientSeries {
            log_rho: rho.iter().map(|r| r.ln()).collect(),
            gamma: gamma.to_vec(),
            mode: CoefficientMode::Exact,
            c_used: None,
            z_used: None,
        };
        s.check()?;
        Ok(s)
    }

    pub fn constant(rho: f64, gamma: f64, rounds: usize) -> Result<Self> {
        Self::from_values(&vec![rho; rounds], &vec![gamma; rounds])
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn rho(&self, t: usize) -> f64 {
        self.log_rho[t].exp()
    }

    pub fn rhos(&self) -> Vec<f64> {
        self.log_rho.iter().map(|l| l.exp()).collect()
    }

    /// Rejects empty series, `rho < 1`, non-positive `gamma`, and any
    /// non-finite entry.
    pub fn check(&self) -> Result<()> {
        if self.gamma.is_empty() {
            return domain("coefficient series must cover at least one round");
        }
        for (t, (&lr, &g)) in self.log_rho.iter().zip(&self.gamma).enumerate() {
            if !lr.is_finite() {
                return Err(Error::NumericRange(format!(
                    "ln rho at round {t} is {lr}; rho is not representable"
                )));
            }
            if lr < 0.0 {
                return domain(format!("rho at round {t} is {} < 1", lr.exp()));
            }
            if !(g > 0.0 && g.is_finite()) {
                return domain(format!("gamma at round {t} must be positive and finite, got {g}"));
            }
        }
        Ok(())
    }
}

/// Sensitivity coefficients `(rho_t, gamma_t)` for `t = 0..T-1`.
pub fn coefficients(cfg: &FlConfig) -> Result<CoefficientSeries> {
    cfg.validate()?;
    let series = match (cfg.method, cfg.mode) {
        (MethodSpec::FedProx { alpha }, CoefficientMode::Exact)
            if cfg.schedule.kind == ScheduleKind::Constant =>
        {
            fedprox_exact(cfg, alpha)?
        }
        (MethodSpec::FedProx { alpha }, _) => fedprox_table(cfg, alpha),
        (MethodSpec::FedAvg, CoefficientMode::Exact) => fedavg_exact(cfg),
        (MethodSpec::FedAvg, CoefficientMode::TableForm) => fedavg_table(cfg)?,
    };
    series.check()?;
    Ok(series)
}

fn fedavg_exact(cfg: &FlConfig) -> CoefficientSeries {
    let s = &cfg.schedule;
    let (k, l) = (cfg.local_steps, cfg.smoothness);
    let scale = 2.0 * cfg.clip_norm / cfg.clients as f64;
    let (log_rho, gamma) = (0..cfg.rounds)
        .map(|t| (s.log_growth(t, k, l), scale * s.lr_sum(t, k)))
        .unzip();
    CoefficientSeries { log_rho, gamma, mode: CoefficientMode::Exact, c_used: None, z_used: None }
}

fn fedavg_table(cfg: &FlConfig) -> Result<CoefficientSeries> {
    let s = &cfg.schedule;
    let mu = s.base_rate;
    let ml = mu * cfg.smoothness;
    let kf = cfg.local_steps as f64;
    let v_m = cfg.clip_norm / cfg.clients as f64;
    let rounds = cfg.rounds;
    let mut c_used = None;
    let mut z_used = None;
    let (log_rho, gamma): (Vec<f64>, Vec<f64>) = match s.kind {
        ScheduleKind::Constant => {
            let lr = kf * ml.ln_1p();
            (vec![lr; rounds], vec![2.0 * mu * v_m * kf; rounds])
        }
        ScheduleKind::Cyclic => {
            let c = effective_c(s, cfg.local_steps)?;
            c_used = Some(c);
            let ln_k1 = kf.ln_1p();
            (vec![c * ml * ln_k1; rounds], vec![2.0 * c * v_m * ln_k1; rounds])
        }
        ScheduleKind::Stagewise => (0..rounds)
            .map(|t| {
                let tp1 = t as f64 + 1.0;
                (kf * (ml / tp1).ln_1p(), 2.0 * mu * v_m * kf / tp1)
            })
            .unzip(),
        ScheduleKind::Continuous => {
            let z = aggregate_z(s, cfg.local_steps, rounds);
            z_used = Some(z);
            (0..rounds)
                .map(|t| {
                    let ln_ratio = (1.0 / (t as f64 + 1.0)).ln_1p();
                    (z * ml * ln_ratio, 2.0 * z * v_m * ln_ratio)
                })
                .unzip()
        }
    };
    Ok(CoefficientSeries { log_rho, gamma, mode: CoefficientMode::TableForm, c_used, z_used })
}

fn fedprox_table(cfg: &FlConfig, alpha: f64) -> CoefficientSeries {
    let l = cfg.smoothness;
    // ln(alpha / (alpha - L)) = -ln(1 - L/alpha)
    let lr = -(-l / alpha).ln_1p();
    let g = 2.0 * cfg.clip_norm / (cfg.clients as f64 * alpha);
    CoefficientSeries {
        log_rho: vec![lr; cfg.rounds],
        gamma: vec![g; cfg.rounds],
        mode: CoefficientMode::TableForm,
        c_used: None,
        z_used: None,
    }
}

fn fedprox_exact(cfg: &FlConfig, alpha: f64) -> Result<CoefficientSeries> {
    let mu = cfg.schedule.base_rate;
    let l = cfg.smoothness;
    if mu * alpha > 1.0 {
        return config(format!(
            "exact FedProx coefficients need mu * alpha <= 1 (mu = {mu}, alpha = {alpha})"
        ));
    }
    let k = cfg.local_steps as i32;
    let alpha_l = alpha - l;
    let rho = alpha / alpha_l - l * (1.0 - mu * alpha_l).powi(k) / alpha_l;
    let gamma = 2.0 * cfg.clip_norm / (cfg.clients as f64 * alpha) * (1.0 - (1.0 - mu * alpha).powi(k));
    Ok(CoefficientSeries {
        log_rho: vec![rho.ln(); cfg.rounds],
        gamma: vec![gamma; cfg.rounds],
        mode: CoefficientMode::Exact,
        c_used: None,
        z_used: None,
    })
}
