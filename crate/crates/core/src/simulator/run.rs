use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    distance, estimate_smoothness, local_path, make_adjacent, make_heterogeneous_data, norm,
    stream_rng, AdjacentPair, ClientDataset, LocalStats, SmoothnessEstimate, Stream,
};
use crate::config::{CoefficientMode, FlConfig, MethodSpec};
use crate::error::{config, Error, Result};
use crate::exec::{map_indexed, map_slice, Execution};
use crate::schedules::{coefficients, Schedule};

/// Relative slack on the per-round inequalities for floating-point rounding.
const BOUND_SLACK: f64 = 1e-12;
/// Pre-noise and post-noise gaps agree to this absolute tolerance.
const PRE_NOISE_TOL: f64 = 1e-12;
/// Global models used as smoothness probe centers.
const PROBE_CENTERS: usize = 11;

/// Federated protocol and synthetic task for one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub clients: usize,
    pub local_steps: usize,
    pub rounds: usize,
    pub clip_norm: f64,
    /// Per-client noise standard deviation; 0 disables noise.
    pub sigma: f64,
    /// FedProx accepts any `alpha >= 0` here; `alpha = 0` is FedAvg.
    pub method: MethodSpec,
    pub schedule: Schedule,
    pub dims: usize,
    pub n_per_client: usize,
    pub dirichlet_beta: f64,
    pub smoothness_probes: usize,
    /// Run with `C' = C`.
    #[serde(default)]
    pub identical_pair: bool,
    /// Also record the pre-noise gap of the averaged uploads.
    #[serde(default)]
    pub record_pre_noise: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            clients: 20,
            local_steps: 5,
            rounds: 200,
            clip_norm: 10.0,
            sigma: 1.0,
            method: MethodSpec::FedAvg,
            schedule: Schedule::constant(0.01),
            dims: 10,
            n_per_client: 100,
            dirichlet_beta: 0.1,
            smoothness_probes: 1000,
            identical_pair: false,
            record_pre_noise: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 || self.local_steps == 0 || self.rounds == 0 {
            return config("clients, local steps and rounds must all be at least 1");
        }
        if self.dims == 0 || self.n_per_client == 0 {
            return config("dimension and samples per client must be positive");
        }
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return config(format!("clip norm must be positive, got {}", self.clip_norm));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return config(format!("sigma must be finite and non-negative, got {}", self.sigma));
        }
        self.schedule.validate()?;
        if let MethodSpec::FedProx { alpha } = self.method {
            if !(alpha >= 0.0 && alpha.is_finite()) {
                return config(format!("proximal coefficient must be non-negative, got {alpha}"));
            }
            // every schedule peaks at the base rate
            if alpha * self.schedule.base_rate > 1.0 {
                return config(format!(
                    "FedProx needs eta * alpha <= 1 (alpha = {alpha}, base rate = {})",
                    self.schedule.base_rate
                ));
            }
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.method.alpha().unwrap_or(0.0)
    }
}

/// One simulation of the protocol on an adjacent pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRun {
    pub config: SimConfig,
    pub seed: u64,
    /// `||w_t - w'_t||` for `t = 1..=T`.
    pub sensitivity_trace: Vec<f64>,
    /// `d_t` from `d_{t+1} = rho_t d_t + gamma_t`, `d_0 = 0`, for `t = 1..=T`.
    pub envelope: Vec<f64>,
    /// Clipped local steps per round, summed over clients and both runs.
    pub clip_events: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_noise_trace: Option<Vec<f64>>,
    pub smoothness: SmoothnessEstimate,
    /// Method whose table coefficients built the envelope.
    pub envelope_method: MethodSpec,
    pub rho: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Rounds where `||D_{t+1}|| > rho_t ||D_t|| + gamma_t`.
    pub recursion_violations: usize,
    /// Rounds where the trace exceeds the envelope.
    pub envelope_violations: usize,
}

/// Per-round CSV view of a [`SimRun`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub round: usize,
    pub sensitivity: f64,
    pub envelope: f64,
    pub clip_count: usize,
}

impl SimRun {
    pub fn rows(&self) -> Vec<TraceRow> {
        (0..self.sensitivity_trace.len())
            .map(|t| TraceRow {
                round: t + 1,
                sensitivity: self.sensitivity_trace[t],
                envelope: self.envelope[t],
                clip_count: self.clip_events[t],
            })
            .collect()
    }

    pub fn final_sensitivity(&self) -> f64 {
        self.sensitivity_trace.last().copied().unwrap_or(0.0)
    }

    pub fn max_sensitivity(&self) -> f64 {
        self.sensitivity_trace.iter().copied().fold(0.0, f64::max)
    }
}

/// Envelope coefficients for the measured smoothness. FedProx with
/// `alpha <= L` is bounded by the FedAvg coefficients when `eta alpha <= 1`.
fn envelope_config(cfg: &SimConfig, smoothness: f64) -> FlConfig {
    let method = match cfg.method {
        MethodSpec::FedProx { alpha } if alpha > smoothness => cfg.method,
        _ => MethodSpec::FedAvg,
    };
    FlConfig {
        clients: cfg.clients,
        local_steps: cfg.local_steps,
        rounds: cfg.rounds,
        clip_norm: cfg.clip_norm,
        sigma: 1.0,
        smoothness,
        method,
        schedule: cfg.schedule,
        mode: CoefficientMode::TableForm,
    }
}

struct ClientStep {
    upload: Vec<f64>,
    upload_prime: Vec<f64>,
    noise: Vec<f64>,
    clipped: usize,
}

fn client_step(
    cfg: &SimConfig,
    pair: &AdjacentPair,
    seed: u64,
    round: usize,
    i: usize,
    w: &[f64],
    w_prime: &[f64],
) -> Result<ClientStep> {
    let alpha = cfg.alpha();
    let run = |model: &[f64], data: &ClientDataset| -> Result<(Vec<f64>, LocalStats)> {
        local_path(model, model, data, &cfg.schedule, round, cfg.local_steps, cfg.clip_norm, alpha, None)
    };
    let (upload, s1) = run(w, &pair.base[i])?;
    let (upload_prime, s2) = run(w_prime, &pair.modified[i])?;
    let mut rng = stream_rng(seed, Stream::Noise, round, i);
    let noise = (0..cfg.dims)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            cfg.sigma * z
        })
        .collect();
    Ok(ClientStep { upload, upload_prime, noise, clipped: s1.clipped + s2.clipped })
}

/// Runs the protocol on `C` and `C'` in lockstep with shared noise.
pub fn run_adjacent(cfg: &SimConfig, pair: &AdjacentPair, seed: u64) -> Result<SimRun> {
    run_adjacent_with(cfg, pair, seed, Execution::default())
}

pub fn run_adjacent_with(
    cfg: &SimConfig,
    pair: &AdjacentPair,
    seed: u64,
    exec: Execution,
) -> Result<SimRun> {
    cfg.validate()?;
    if pair.clients() != cfg.clients || pair.modified.len() != cfg.clients {
        return config(format!(
            "pair holds {} clients, configuration expects {}",
            pair.clients(),
            cfg.clients
        ));
    }
    if pair.base.iter().chain(&pair.modified).any(|c| c.dims != cfg.dims) {
        return config(format!("dataset dimension differs from configured {}", cfg.dims));
    }

    let m = cfg.clients as f64;
    let mut w = vec![0.0; cfg.dims];
    let mut w_prime = w.clone();
    let mut trace = Vec::with_capacity(cfg.rounds);
    let mut clip_events = Vec::with_capacity(cfg.rounds);
    let mut pre_noise = cfg.record_pre_noise.then(|| Vec::with_capacity(cfg.rounds));
    let mut visited = vec![w.clone()];

    for t in 0..cfg.rounds {
        let steps = map_indexed(cfg.clients, exec, |i| client_step(cfg, pair, seed, t, i, &w, &w_prime));
        let mut next = vec![0.0; cfg.dims];
        let mut next_prime = vec![0.0; cfg.dims];
        let mut mean_upload = vec![0.0; cfg.dims];
        let mut mean_upload_prime = vec![0.0; cfg.dims];
        let mut clipped = 0;
        // fixed client order keeps the reduction bit-reproducible
        for step in steps {
            let step = step?;
            for j in 0..cfg.dims {
                next[j] += step.upload[j] + step.noise[j];
                next_prime[j] += step.upload_prime[j] + step.noise[j];
                mean_upload[j] += step.upload[j];
                mean_upload_prime[j] += step.upload_prime[j];
            }
            clipped += step.clipped;
        }
        for v in [&mut next, &mut next_prime, &mut mean_upload, &mut mean_upload_prime] {
            v.iter_mut().for_each(|x| *x /= m);
        }
        if next.iter().chain(&next_prime).any(|x| !x.is_finite()) {
            return Err(Error::SimulationAborted {
                round: t,
                reason: "global model became non-finite".into(),
            });
        }
        let gap = distance(&next, &next_prime);
        if let Some(p) = pre_noise.as_mut() {
            let pre = distance(&mean_upload, &mean_upload_prime);
            if (pre - gap).abs() > PRE_NOISE_TOL * (1.0 + norm(&next)) {
                return Err(Error::SimulationAborted {
                    round: t,
                    reason: format!("pre-noise gap {pre:e} disagrees with model gap {gap:e}"),
                });
            }
            p.push(pre);
        }
        trace.push(gap);
        clip_events.push(clipped);
        w = next;
        w_prime = next_prime;
        visited.push(w.clone());
        visited.push(w_prime.clone());
    }

    // local iterates stay within sum_k eta_k V of the round-start model
    let max_lr = (0..cfg.rounds).map(|t| cfg.schedule.lr_sum(t, cfg.local_steps)).fold(0.0, f64::max);
    let stride = (visited.len() / PROBE_CENTERS).max(1);
    let centers: Vec<Vec<f64>> = visited.iter().step_by(stride).cloned().collect();
    let mut datasets: Vec<&ClientDataset> = pair.base.iter().collect();
    if let Some(i) = pair.diff_client() {
        datasets.push(&pair.modified[i]);
    }
    let smoothness = estimate_smoothness(
        &datasets,
        &centers,
        max_lr * cfg.clip_norm,
        cfg.smoothness_probes,
        seed,
        exec,
    )?;

    let env_cfg = envelope_config(cfg, smoothness.envelope);
    let coeffs = coefficients(&env_cfg)?;
    let rho = coeffs.rhos();
    let gamma = coeffs.gamma.clone();

    let mut envelope = Vec::with_capacity(cfg.rounds);
    let mut d = 0.0;
    let mut prev_gap = 0.0;
    let mut recursion_violations = 0;
    let mut envelope_violations = 0;
    for t in 0..cfg.rounds {
        let step_bound = rho[t] * prev_gap + gamma[t];
        if trace[t] > step_bound * (1.0 + BOUND_SLACK) {
            recursion_violations += 1;
        }
        d = rho[t] * d + gamma[t];
        if trace[t] > d * (1.0 + BOUND_SLACK) {
            envelope_violations += 1;
        }
        envelope.push(d);
        prev_gap = trace[t];
    }

    Ok(SimRun {
        config: cfg.clone(),
        seed,
        sensitivity_trace: trace,
        envelope,
        clip_events,
        pre_noise_trace: pre_noise,
        smoothness,
        envelope_method: env_cfg.method,
        rho,
        gamma,
        recursion_violations,
        envelope_violations,
    })
}

/// Default pair for `seed`: heterogeneous data with sample `(0, 0)` replaced,
/// or the identical control when `identical_pair` is set.
pub fn default_pair(cfg: &SimConfig, seed: u64) -> Result<AdjacentPair> {
    let base = make_heterogeneous_data(cfg.clients, cfg.n_per_client, cfg.dims, cfg.dirichlet_beta, seed)?;
    if cfg.identical_pair {
        Ok(AdjacentPair::identical(base))
    } else {
        make_adjacent(&base, 0, 0, seed)
    }
}

/// Builds the default pair and runs it.
pub fn simulate(cfg: &SimConfig, seed: u64) -> Result<SimRun> {
    simulate_with(cfg, seed, Execution::default())
}

pub fn simulate_with(cfg: &SimConfig, seed: u64, exec: Execution) -> Result<SimRun> {
    cfg.validate()?;
    let pair = default_pair(cfg, seed)?;
    run_adjacent_with(cfg, &pair, seed, exec)
}

/// Summary of one configuration in a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub final_sensitivity: f64,
    pub max_sensitivity: f64,
    pub final_envelope: f64,
    /// No envelope or recursion violation at any round.
    pub envelope_feasible: bool,
    pub smoothness: f64,
}

/// Runs every configuration; rows come back in input order. Runs execute
/// concurrently under [`Execution::Parallel`], each one sequentially inside.
pub fn sweep_sensitivity<F>(
    configs: &[SimConfig],
    pair_factory: F,
    seed: u64,
    exec: Execution,
) -> Result<Vec<SweepRow>>
where
    F: Fn(&SimConfig, u64) -> Result<AdjacentPair> + Sync + Send,
{
    let indexed: Vec<(usize, &SimConfig)> = configs.iter().enumerate().collect();
    map_slice(&indexed, exec, |&(index, cfg)| {
        let pair = pair_factory(cfg, seed)?;
        let run = run_adjacent_with(cfg, &pair, seed, Execution::Sequential)?;
        Ok(SweepRow {
            index,
            final_sensitivity: run.final_sensitivity(),
            max_sensitivity: run.max_sensitivity(),
            final_envelope: run.envelope.last().copied().unwrap_or(0.0),
            envelope_feasible: run.envelope_violations == 0 && run.recursion_violations == 0,
            smoothness: run.smoothness.envelope,
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::ScheduleKind;

    fn small() -> SimConfig {
        SimConfig { clients: 6, rounds: 30, n_per_client: 40, smoothness_probes: 100, ..SimConfig::default() }
    }

    #[test]
    fn identical_pair_has_zero_trace() {
        let cfg = SimConfig { identical_pair: true, ..small() };
        let run = simulate(&cfg, 3).unwrap();
        assert!(run.sensitivity_trace.iter().all(|&x| x == 0.0));
        assert_eq!(run.sensitivity_trace.len(), 30);
        assert!(run.envelope.iter().all(|&d| d > 0.0));
    }

    #[test]
    fn noiseless_difference_is_positive() {
        let cfg = SimConfig { sigma: 0.0, ..small() };
        let run = simulate(&cfg, 4).unwrap();
        assert!(run.sensitivity_trace.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn deterministic_and_mode_independent() {
        let cfg = small();
        let a = simulate_with(&cfg, 8, Execution::Sequential).unwrap();
        let b = simulate_with(&cfg, 8, Execution::Parallel).unwrap();
        let c = simulate_with(&cfg, 8, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
    }

    #[test]
    fn envelope_holds_for_every_schedule() {
        for kind in [ScheduleKind::Constant, ScheduleKind::Cyclic, ScheduleKind::Stagewise, ScheduleKind::Continuous] {
            let cfg = SimConfig { schedule: Schedule::new(kind, 0.1).unwrap(), ..small() };
            let run = simulate(&cfg, 1).unwrap();
            assert_eq!(run.recursion_violations, 0, "{kind:?}");
            assert_eq!(run.envelope_violations, 0, "{kind:?}");
        }
    }

    #[test]
    fn pre_noise_gap_matches() {
        let cfg = SimConfig { record_pre_noise: true, ..small() };
        let run = simulate(&cfg, 2).unwrap();
        let pre = run.pre_noise_trace.as_ref().unwrap();
        for (a, b) in pre.iter().zip(&run.sensitivity_trace) {
            assert!((a - b).abs() <= 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn prox_zero_is_fedavg() {
        let avg = simulate(&small(), 5).unwrap();
        let prox_cfg = SimConfig { method: MethodSpec::FedProx { alpha: 0.0 }, ..small() };
        let prox = simulate(&prox_cfg, 5).unwrap();
        assert_eq!(avg.sensitivity_trace, prox.sensitivity_trace);
        assert_eq!(avg.envelope, prox.envelope);
    }

    #[test]
    fn prox_with_large_alpha_uses_prox_envelope() {
        let cfg = SimConfig { method: MethodSpec::FedProx { alpha: 5.0 }, ..small() };
        let run = simulate(&cfg, 5).unwrap();
        assert_eq!(run.envelope_method, cfg.method);
        assert_eq!(run.recursion_violations + run.envelope_violations, 0);
        let tiny = SimConfig { method: MethodSpec::FedProx { alpha: 1e-3 }, ..small() };
        assert_eq!(simulate(&tiny, 5).unwrap().envelope_method, MethodSpec::FedAvg);
    }

    #[test]
    fn rejects_bad_prox_step() {
        let cfg = SimConfig { method: MethodSpec::FedProx { alpha: 200.0 }, ..small() };
        assert!(matches!(simulate(&cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn sweep_preserves_order() {
        let cfgs: Vec<SimConfig> = [4usize, 8].iter().map(|&m| SimConfig { clients: m, ..small() }).collect();
        let seq = sweep_sensitivity(&cfgs, default_pair, 3, Execution::Sequential).unwrap();
        let par = sweep_sensitivity(&cfgs, default_pair, 3, Execution::Parallel).unwrap();
        assert_eq!(seq, par);
        assert_eq!(seq[1].index, 1);
        assert!(seq.iter().all(|r| r.envelope_feasible));
    }
}
