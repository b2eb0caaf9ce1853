//! Subcommand implementations.

use std::path::{Path, PathBuf};

use fedgdp_core::accountant::{self, BoundKind};
use fedgdp_core::exec::map_indexed;
use fedgdp_core::simulator::{self, SimConfig, SimRun};
use fedgdp_core::tradeoff::{self, gdp_to_eps_delta, gdp_to_rdp, TradeoffPoint};
use fedgdp_core::{CalibrationTarget, EpsDelta, Execution, FlConfig, GdpCurve, RenyiBudget};
use serde::Serialize;

use crate::args::{
    AccountArgs, CalibrateArgs, Cli, Command, ExecArg, ReplayArgs, SimulateArgs, SweepArgs, TradeoffArgs,
};
use crate::output::{self, float, opt_float, Csv, RunManifest};
use crate::settings::{self, ACCOUNT_DEFAULTS};
use crate::CliError;

pub const EPSILONS: [f64; 5] = [0.5, 1.0, 2.0, 4.0, 8.0];
pub const RDP_ORDERS: [f64; 5] = [2.0, 4.0, 8.0, 16.0, 32.0];
pub const OUT_DIR_ENV: &str = "FEDGDP_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "fedgdp-out";

pub const SWEEP_HEADER: [&str; 10] = [
    "index",
    "T",
    "K",
    "m",
    "sigma",
    "alpha",
    "gdp_mu",
    "closed_form_mu",
    "baseline_mu",
    "lambda_feasible",
];

/// What a command did, for the optional manifest.
struct Ran {
    config: serde_json::Value,
    seed: Option<u64>,
}

fn json_value<T: Serialize>(value: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(value).map_err(|e| CliError::Io(e.to_string()))
}

fn execution(arg: ExecArg) -> Execution {
    match arg {
        ExecArg::Sequential => Execution::Sequential,
        ExecArg::Parallel => Execution::Parallel,
    }
}

pub fn dispatch(cli: Cli, argv: &[String]) -> Result<(), CliError> {
    let exec = execution(cli.exec);
    let (name, ran) = match &cli.command {
        Command::Account(a) => ("account", account(a)?),
        Command::Calibrate(a) => ("calibrate", calibrate(a)?),
        Command::Sweep(a) => ("sweep", sweep(a, exec)?),
        Command::Simulate(a) => ("simulate", simulate(a, exec, argv)?),
        Command::Tradeoff(a) => ("tradeoff", tradeoff_cmd(a, exec)?),
        Command::Replay(a) => return replay(a),
    };
    if let Some(path) = &cli.manifest {
        let manifest = RunManifest::new(name, argv, &ran.config, ran.seed)?;
        output::write_file(path, &output::to_json(&manifest)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AccountDoc<'a> {
    schema: &'static str,
    config: &'a FlConfig,
    gdp_mu: f64,
    closed_form_mu: Option<f64>,
    h0: f64,
    bound_kind: BoundKind,
    lambda_feasible: bool,
    lambda_degenerate_round: Option<usize>,
    eps_delta: Vec<EpsDelta>,
    rdp: Vec<RenyiBudget>,
}

fn account(args: &AccountArgs) -> Result<Ran, CliError> {
    let cfg = settings::resolve(&args.fl, &ACCOUNT_DEFAULTS)?.single_config()?;
    let res = accountant::account(&cfg).map_err(CliError::accounting)?;
    let eps_delta = EPSILONS
        .iter()
        .map(|&e| gdp_to_eps_delta(res.gdp, e))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::accounting)?;
    let rdp = RDP_ORDERS
        .iter()
        .map(|&z| gdp_to_rdp(res.gdp, z))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::accounting)?;
    let doc = AccountDoc {
        schema: output::ACCOUNT_SCHEMA,
        config: &cfg,
        gdp_mu: res.gdp.mu(),
        closed_form_mu: res.closed_form_mu,
        h0: res.h0,
        bound_kind: res.bound_kind,
        lambda_feasible: res.lambda_feasible,
        lambda_degenerate_round: res.lambda_degenerate_round,
        eps_delta,
        rdp,
    };
    output::emit(&output::to_json(&doc)?, args.out.as_deref())?;
    Ok(Ran { config: json_value(&cfg)?, seed: None })
}

#[derive(Serialize)]
struct CalibrateDoc<'a> {
    schema: &'static str,
    config: &'a FlConfig,
    target: CalibrationTarget,
    target_mu: f64,
    sigma: f64,
    achieved_mu: f64,
    achieved_delta_at_epsilon: Option<f64>,
}

fn calibrate(args: &CalibrateArgs) -> Result<Ran, CliError> {
    if !args.fl.sigma.is_empty() {
        return Err(CliError::Usage("calibrate solves for sigma; --sigma does not apply".into()));
    }
    let target = match (args.epsilon, args.delta, args.target_mu) {
        (Some(epsilon), Some(delta), None) => {
            let ed = EpsDelta::new(epsilon, delta).map_err(CliError::calibration)?;
            CalibrationTarget::EpsDelta(ed)
        }
        (None, None, Some(mu)) => CalibrationTarget::Gdp(mu),
        _ => return Err(CliError::Usage("give either --epsilon with --delta, or --target-mu".into())),
    };
    let base = settings::resolve(&args.fl, &ACCOUNT_DEFAULTS)?.single_config()?;
    let target_mu = target.target_mu().map_err(CliError::calibration)?;
    let sigma = accountant::calibrate_sigma(&base, target).map_err(CliError::calibration)?;
    let cfg = base.with_sigma(sigma);
    cfg.validate().map_err(CliError::calibration)?;
    let res = accountant::account(&cfg).map_err(CliError::accounting)?;
    let achieved_delta_at_epsilon = match args.epsilon {
        Some(e) => Some(accountant::delta_at(&res, e).map_err(CliError::accounting)?),
        None => None,
    };
    let doc = CalibrateDoc {
        schema: output::CALIBRATE_SCHEMA,
        config: &cfg,
        target,
        target_mu,
        sigma,
        achieved_mu: res.gdp.mu(),
        achieved_delta_at_epsilon,
    };
    output::emit(&output::to_json(&doc)?, args.out.as_deref())?;
    Ok(Ran { config: json_value(&cfg)?, seed: None })
}

struct SweepPoint {
    cfg: FlConfig,
    alpha: Option<f64>,
}

fn sweep(args: &SweepArgs, exec: Execution) -> Result<Ran, CliError> {
    let r = settings::resolve(&args.fl, &ACCOUNT_DEFAULTS)?;
    let alphas = r.alpha_grid()?;
    if r.rounds.is_empty() || r.local_steps.is_empty() || r.clients.is_empty() || r.sigma.is_empty() {
        return Err(CliError::Usage("empty grid".into()));
    }
    let mut points = Vec::new();
    for &t in &r.rounds {
        for &k in &r.local_steps {
            for &m in &r.clients {
                for &s in &r.sigma {
                    for &a in &alphas {
                        points.push(SweepPoint { cfg: r.fl_config(t, k, m, s, a)?, alpha: a });
                    }
                }
            }
        }
    }
    let rows = map_indexed(points.len(), exec, |i| -> Result<Vec<String>, CliError> {
        let p = &points[i];
        let res = accountant::account(&p.cfg).map_err(CliError::accounting)?;
        let baseline = accountant::naive_composition_baseline(&p.cfg).map_err(CliError::accounting)?;
        Ok(vec![
            i.to_string(),
            p.cfg.rounds.to_string(),
            p.cfg.local_steps.to_string(),
            p.cfg.clients.to_string(),
            float(p.cfg.sigma),
            opt_float(p.alpha),
            float(res.gdp.mu()),
            opt_float(res.closed_form_mu),
            float(baseline.mu()),
            res.lambda_feasible.to_string(),
        ])
    });
    let mut csv = Csv::new(output::SWEEP_SCHEMA, &SWEEP_HEADER);
    for row in rows {
        csv.row(&row?);
    }
    output::emit(&csv.into_string(), args.out.as_deref())?;
    let configs: Vec<&FlConfig> = points.iter().map(|p| &p.cfg).collect();
    Ok(Ran { config: json_value(&configs)?, seed: None })
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    schema: &'static str,
    config: &'a SimConfig,
    seed: u64,
    final_sensitivity: f64,
    max_sensitivity: f64,
    final_envelope: f64,
    envelope_violations: usize,
    recursion_violations: usize,
    total_clip_events: usize,
    smoothness_empirical: f64,
    smoothness_envelope: f64,
    envelope_method: fedgdp_core::MethodSpec,
}

pub fn out_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn trace_csv(run: &SimRun) -> String {
    let mut header = vec!["round", "sensitivity", "envelope", "clip_count"];
    if run.pre_noise_trace.is_some() {
        header.push("pre_noise");
    }
    let mut csv = Csv::new(output::TRACE_SCHEMA, &header);
    for (i, row) in run.rows().iter().enumerate() {
        let mut cells = vec![
            row.round.to_string(),
            float(row.sensitivity),
            float(row.envelope),
            row.clip_count.to_string(),
        ];
        if let Some(pre) = &run.pre_noise_trace {
            cells.push(float(pre[i]));
        }
        csv.row(&cells);
    }
    csv.into_string()
}

fn simulate(args: &SimulateArgs, exec: Execution, argv: &[String]) -> Result<Ran, CliError> {
    let (cfg, seed) = settings::sim_config(args)?;
    let run = simulator::simulate_with(&cfg, seed, exec).map_err(CliError::simulation)?;
    let dir = out_dir(args.out_dir.as_deref());
    output::write_file(&dir.join("trace.csv"), &trace_csv(&run))?;
    let summary = SummaryDoc {
        schema: output::SUMMARY_SCHEMA,
        config: &cfg,
        seed,
        final_sensitivity: run.final_sensitivity(),
        max_sensitivity: run.max_sensitivity(),
        final_envelope: run.envelope.last().copied().unwrap_or(0.0),
        envelope_violations: run.envelope_violations,
        recursion_violations: run.recursion_violations,
        total_clip_events: run.clip_events.iter().sum(),
        smoothness_empirical: run.smoothness.empirical,
        smoothness_envelope: run.smoothness.envelope,
        envelope_method: run.envelope_method,
    };
    output::write_file(&dir.join("summary.json"), &output::to_json(&summary)?)?;
    let manifest = RunManifest::new("simulate", argv, &cfg, Some(seed))?;
    output::write_file(&dir.join("manifest.json"), &output::to_json(&manifest)?)?;
    Ok(Ran { config: json_value(&cfg)?, seed: Some(seed) })
}

/// Uniform grid `i / (n - 1)` for `i = 0..n`.
pub fn alpha_grid(n: usize) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n).map(|i| i as f64 / last).collect()
}

#[derive(Serialize)]
struct TradeoffConfig {
    mu: f64,
    points: usize,
    mc_samples: Option<usize>,
}

fn tradeoff_cmd(args: &TradeoffArgs, exec: Execution) -> Result<Ran, CliError> {
    if args.points < 2 {
        return Err(CliError::Usage("--points must be at least 2".into()));
    }
    let curve = GdpCurve::new(args.mu).map_err(CliError::usage)?;
    let grid = alpha_grid(args.points);
    let beta = grid
        .iter()
        .map(|&a| tradeoff::gdp_tradeoff(curve, a))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::usage)?;
    let mc: Option<Vec<TradeoffPoint>> = match args.mc_samples {
        Some(n) => Some(
            tradeoff::mc_tradeoff_estimate_with(args.mu, &grid, n, args.seed, exec).map_err(CliError::usage)?,
        ),
        None => None,
    };
    let mut header = vec!["alpha", "beta"];
    if mc.is_some() {
        header.extend(["alpha_hat", "beta_hat", "std_error"]);
    }
    let mut csv = Csv::new(output::TRADEOFF_SCHEMA, &header);
    for (i, (&a, &b)) in grid.iter().zip(&beta).enumerate() {
        let mut cells = vec![float(a), float(b)];
        if let Some(points) = &mc {
            let p = &points[i];
            cells.extend([float(p.alpha_hat), float(p.beta_hat), float(p.std_error)]);
        }
        csv.row(&cells);
    }
    output::emit(&csv.into_string(), args.out.as_deref())?;
    let config = TradeoffConfig { mu: args.mu, points: args.points, mc_samples: args.mc_samples };
    let seed = args.mc_samples.map(|_| args.seed);
    Ok(Ran { config: json_value(&config)?, seed })
}

fn replay(args: &ReplayArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.manifest)
        .map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", args.manifest.display())))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid manifest {}: {e}", args.manifest.display())))?;
    if manifest.schema != output::MANIFEST_SCHEMA {
        return Err(CliError::Usage(format!("unsupported manifest schema {}", manifest.schema)));
    }
    let argv: Vec<String> = std::iter::once("fedgdp".to_string()).chain(manifest.args.iter().cloned()).collect();
    let cli = <Cli as clap::Parser>::try_parse_from(&argv).map_err(|e| CliError::Usage(e.to_string()))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::Usage("a manifest cannot record a replay".into()));
    }
    dispatch(cli, &manifest.args)
}
