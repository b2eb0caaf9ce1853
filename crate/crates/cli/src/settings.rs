//! Merges `--config` files with flags into core configurations.

use std::path::Path;

use fedgdp_core::simulator::SimConfig;
use fedgdp_core::{CoefficientMode, FlConfig, MethodSpec, Schedule, ScheduleKind};
use serde::Deserialize;

use crate::args::{FlArgs, MethodArg, ModeArg, ScheduleArg, SimulateArgs};
use crate::CliError;

/// A scalar or a list in a config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Keys accepted in a `--config` JSON file; names match the flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    method: Option<MethodArg>,
    schedule: Option<ScheduleArg>,
    mu: Option<f64>,
    #[serde(rename = "L")]
    smoothness: Option<f64>,
    #[serde(rename = "V")]
    clip_norm: Option<f64>,
    #[serde(rename = "K")]
    local_steps: Option<OneOrMany<usize>>,
    #[serde(rename = "T")]
    rounds: Option<OneOrMany<usize>>,
    #[serde(rename = "m")]
    clients: Option<OneOrMany<usize>>,
    sigma: Option<OneOrMany<f64>>,
    alpha: Option<OneOrMany<f64>>,
    mode: Option<ModeArg>,
    c: Option<f64>,
    z: Option<f64>,
    seed: Option<u64>,
    n_per_client: Option<usize>,
    dims: Option<usize>,
    dirichlet_beta: Option<f64>,
    probes: Option<usize>,
}

fn read_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

/// Flags and file values after precedence is applied; lists stay lists.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub method: MethodArg,
    pub schedule: ScheduleArg,
    pub mu: f64,
    pub smoothness: f64,
    pub clip_norm: f64,
    pub local_steps: Vec<usize>,
    pub rounds: Vec<usize>,
    pub clients: Vec<usize>,
    pub sigma: Vec<f64>,
    pub alpha: Vec<f64>,
    pub mode: ModeArg,
    pub c: Option<f64>,
    pub z: Option<f64>,
    pub seed: Option<u64>,
    pub n_per_client: Option<usize>,
    pub dims: Option<usize>,
    pub dirichlet_beta: Option<f64>,
    pub probes: Option<usize>,
}

/// Per-command fallbacks for values given neither as flags nor in the file.
pub struct Defaults {
    pub mu: f64,
    pub local_steps: usize,
    pub rounds: usize,
    pub clients: usize,
    pub sigma: f64,
}

pub const ACCOUNT_DEFAULTS: Defaults =
    Defaults { mu: 0.1, local_steps: 5, rounds: 100, clients: 20, sigma: 1.0 };

fn pick_list<T>(flag: Vec<T>, file: Option<OneOrMany<T>>, default: Option<T>) -> Vec<T> {
    if !flag.is_empty() {
        flag
    } else if let Some(f) = file {
        f.into_vec()
    } else {
        default.into_iter().collect()
    }
}

pub fn resolve(fl: &FlArgs, defaults: &Defaults) -> Result<Resolved, CliError> {
    let file = match &fl.config {
        Some(p) => read_file(p)?,
        None => FileConfig::default(),
    };
    Ok(Resolved {
        method: fl.method.or(file.method).unwrap_or(MethodArg::Fedavg),
        schedule: fl.schedule.or(file.schedule).unwrap_or(ScheduleArg::Constant),
        mu: fl.mu.or(file.mu).unwrap_or(defaults.mu),
        smoothness: fl.smoothness.or(file.smoothness).unwrap_or(1.0),
        clip_norm: fl.clip_norm.or(file.clip_norm).unwrap_or(10.0),
        local_steps: pick_list(fl.local_steps.clone(), file.local_steps, Some(defaults.local_steps)),
        rounds: pick_list(fl.rounds.clone(), file.rounds, Some(defaults.rounds)),
        clients: pick_list(fl.clients.clone(), file.clients, Some(defaults.clients)),
        sigma: pick_list(fl.sigma.clone(), file.sigma, Some(defaults.sigma)),
        alpha: pick_list(fl.alpha.clone(), file.alpha, None),
        mode: fl.mode.or(file.mode).unwrap_or(ModeArg::Table),
        c: fl.c.or(file.c),
        z: fl.z.or(file.z),
        seed: file.seed,
        n_per_client: file.n_per_client,
        dims: file.dims,
        dirichlet_beta: file.dirichlet_beta,
        probes: file.probes,
    })
}

fn single<T: Copy>(name: &str, values: &[T]) -> Result<T, CliError> {
    match values {
        [x] => Ok(*x),
        [] => Err(CliError::Usage(format!("--{name} is required"))),
        _ => Err(CliError::Usage(format!("--{name} takes one value outside `sweep`"))),
    }
}

impl Resolved {
    pub fn schedule(&self) -> Result<Schedule, CliError> {
        let kind = match self.schedule {
            ScheduleArg::Constant => ScheduleKind::Constant,
            ScheduleArg::Cyclic => ScheduleKind::Cyclic,
            ScheduleArg::Stagewise => ScheduleKind::Stagewise,
            ScheduleArg::Continuous => ScheduleKind::Continuous,
        };
        let mut s = Schedule::new(kind, self.mu).map_err(CliError::usage)?;
        if let Some(c) = self.c {
            s = s.with_c(c).map_err(CliError::usage)?;
        }
        if let Some(z) = self.z {
            s = s.with_z(z).map_err(CliError::usage)?;
        }
        Ok(s)
    }

    /// Method for one grid value of alpha; FedProx requires one.
    pub fn method(&self, alpha: Option<f64>) -> Result<MethodSpec, CliError> {
        match (self.method, alpha) {
            (MethodArg::Fedavg, None) => Ok(MethodSpec::FedAvg),
            (MethodArg::Fedavg, Some(_)) => Err(CliError::Usage("--alpha only applies to fedprox".into())),
            (MethodArg::Fedprox, Some(alpha)) => Ok(MethodSpec::FedProx { alpha }),
            (MethodArg::Fedprox, None) => Err(CliError::Usage("fedprox requires --alpha".into())),
        }
    }

    pub fn alpha_grid(&self) -> Result<Vec<Option<f64>>, CliError> {
        match self.method {
            MethodArg::Fedavg if self.alpha.is_empty() => Ok(vec![None]),
            MethodArg::Fedavg => Err(CliError::Usage("--alpha only applies to fedprox".into())),
            MethodArg::Fedprox if self.alpha.is_empty() => {
                Err(CliError::Usage("fedprox requires --alpha".into()))
            }
            MethodArg::Fedprox => Ok(self.alpha.iter().copied().map(Some).collect()),
        }
    }

    fn mode(&self) -> CoefficientMode {
        match self.mode {
            ModeArg::Exact => CoefficientMode::Exact,
            ModeArg::Table => CoefficientMode::TableForm,
        }
    }

    /// The configuration at one grid point.
    pub fn fl_config(
        &self,
        rounds: usize,
        local_steps: usize,
        clients: usize,
        sigma: f64,
        alpha: Option<f64>,
    ) -> Result<FlConfig, CliError> {
        let cfg = FlConfig {
            clients,
            local_steps,
            rounds,
            clip_norm: self.clip_norm,
            sigma,
            smoothness: self.smoothness,
            method: self.method(alpha)?,
            schedule: self.schedule()?,
            mode: self.mode(),
        };
        cfg.validate().map_err(CliError::usage)?;
        Ok(cfg)
    }

    /// Single-valued configuration for `account` and `calibrate`.
    pub fn single_config(&self) -> Result<FlConfig, CliError> {
        let alpha = match self.alpha.as_slice() {
            [] => None,
            _ => Some(single("alpha", &self.alpha)?),
        };
        self.fl_config(
            single("T", &self.rounds)?,
            single("K", &self.local_steps)?,
            single("m", &self.clients)?,
            single("sigma", &self.sigma)?,
            alpha,
        )
    }
}

/// Simulator configuration: `SimConfig` defaults unless overridden.
pub fn sim_config(args: &SimulateArgs) -> Result<(SimConfig, u64), CliError> {
    let base = SimConfig::default();
    let defaults = Defaults {
        mu: base.schedule.base_rate,
        local_steps: base.local_steps,
        rounds: base.rounds,
        clients: base.clients,
        sigma: base.sigma,
    };
    let r = resolve(&args.fl, &defaults)?;
    if args.fl.mode.is_some() {
        return Err(CliError::Usage("--mode does not apply to simulate".into()));
    }
    if args.fl.smoothness.is_some() {
        return Err(CliError::Usage("simulate measures L; --L does not apply".into()));
    }
    let alpha = match r.alpha.as_slice() {
        [] => None,
        _ => Some(single("alpha", &r.alpha)?),
    };
    let cfg = SimConfig {
        clients: single("m", &r.clients)?,
        local_steps: single("K", &r.local_steps)?,
        rounds: single("T", &r.rounds)?,
        clip_norm: r.clip_norm,
        sigma: single("sigma", &r.sigma)?,
        method: r.method(alpha)?,
        schedule: r.schedule()?,
        dims: args.dims.or(r.dims).unwrap_or(base.dims),
        n_per_client: args.n_per_client.or(r.n_per_client).unwrap_or(base.n_per_client),
        dirichlet_beta: args.dirichlet_beta.or(r.dirichlet_beta).unwrap_or(base.dirichlet_beta),
        smoothness_probes: args.probes.or(r.probes).unwrap_or(base.smoothness_probes),
        identical_pair: args.identical,
        record_pre_noise: args.record_pre_noise,
    };
    cfg.validate().map_err(CliError::usage)?;
    let seed = args.seed.or(r.seed).unwrap_or(0);
    Ok((cfg, seed))
}
