//! Worst-privacy accounting through shifted interpolation.
//!
//! With interpolation coefficients `lambda_{t+1}` and worst-case gaps
//! `d_{t+1} = (1 - lambda_{t+1})(rho_t d_t + gamma_t)`, `d_0 = 0`, the final
//! model is `T_G(sqrt(m H) / sigma)`-private for
//! `H = sum_t lambda_{t+1}^2 (rho_t d_t + gamma_t)^2`. Requiring the shifted
//! sequence to meet the real one at `T` (`d_T = 0`) and applying
//! Cauchy-Schwarz gives the minimum
//!
//! ```text
//! H_0 = (sum_t P_{t+1} gamma_t)^2 / sum_t P_{t+1}^2,   P_{t+1} = prod_{j>t} rho_j
//! ```
//!
//! with the observation point fixed at `t0 = 0`. All products are handled as
//! `w_t = P_{t+1} / P_1 = exp(-sum_{j=1..t} ln rho_j)`, which lies in `(0, 1]`
//! because `rho >= 1`; `H_0` is invariant to that rescaling.

use serde::{Deserialize, Serialize};

use crate::config::{FlConfig, MethodSpec};
use crate::error::{domain, Error, Result};
use crate::schedules::{aggregate_z, coefficients, effective_c, CoefficientSeries, ScheduleKind};
use crate::tradeoff::{eps_delta_to_gdp, gdp_to_eps_delta, EpsDelta, GdpCurve};

/// How the reported closed form relates to the numeric `H_0` value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    /// The closed form is the exact solution for the table coefficients.
    ExactEquality,
    /// The closed form upper-bounds the GDP parameter.
    UpperBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountingResult {
    pub h0: f64,
    pub gdp: GdpCurve,
    /// `lambda_1 .. lambda_T`.
    pub lambdas: Vec<f64>,
    /// All lambdas lie in `[0, 1]`.
    pub lambda_feasible: bool,
    /// Round whose denominator vanished; `lambdas` then stops before it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_degenerate_round: Option<usize>,
    pub closed_form_mu: Option<f64>,
    pub bound_kind: BoundKind,
    /// Observation point of the relaxation; always 0.
    pub t0: usize,
}

/// Normalised products `w_t = P_{t+1} / P_1`.
fn interpolation_weights(coeffs: &CoefficientSeries) -> Vec<f64> {
    let mut weights = Vec::with_capacity(coeffs.len());
    let mut log_acc = 0.0;
    for (t, lr) in coeffs.log_rho.iter().enumerate() {
        if t > 0 {
            log_acc += lr;
        }
        weights.push((-log_acc).exp());
    }
    weights
}

/// `(sum w gamma, sum w^2)`, with compensated summation.
fn weighted_sums(coeffs: &CoefficientSeries, weights: &[f64]) -> (f64, f64) {
    let mut num = Neumaier::default();
    let mut den = Neumaier::default();
    for (&w, &g) in weights.iter().zip(&coeffs.gamma) {
        num.add(w * g);
        den.add(w * w);
    }
    (num.total(), den.total())
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Minimised accumulation `H_0` for the given coefficients.
pub fn h0(coeffs: &CoefficientSeries) -> Result<f64> {
    coeffs.check()?;
    let w = interpolation_weights(coeffs);
    let (num, den) = weighted_sums(coeffs, &w);
    let h = num * num / den;
    if !h.is_finite() {
        return Err(Error::NumericRange(format!("H_0 evaluated to {h} (numerator {num:e})")));
    }
    Ok(h)
}

/// `H_0`, the GDP curve `sqrt(m H_0) / sigma` and the recovered lambdas.
///
/// `closed_form_mu` is left empty; [`account`] fills it in when the
/// coefficients came from a configuration.
pub fn solve_h0(coeffs: &CoefficientSeries, clients: usize, sigma: f64) -> Result<AccountingResult> {
    if clients == 0 {
        return domain("client count must be at least 1");
    }
    if !(sigma > 0.0) {
        return domain(format!("sigma must be positive, got {sigma}"));
    }
    let h = h0(coeffs)?;
    let gdp = GdpCurve::new((clients as f64 * h).sqrt() / sigma)?;
    let trace = lambda_trace(coeffs)?;
    Ok(AccountingResult {
        h0: h,
        gdp,
        lambda_feasible: trace.degenerate.is_none() && all_in_unit(&trace.lambdas),
        lambda_degenerate_round: trace.degenerate.map(|(round, _)| round),
        lambdas: trace.lambdas,
        closed_form_mu: None,
        bound_kind: BoundKind::UpperBound,
        t0: 0,
    })
}

const DEGENERATE_TOL: f64 = 1e-15;

/// Lambdas satisfying the Cauchy-Schwarz equality condition
/// `lambda_{t+1} (rho_t d_t + gamma_t) = C_0 P_{t+1}`, run forward on the
/// signed gap recursion. Returns the sequence and whether it is feasible.
pub fn recover_lambdas(coeffs: &CoefficientSeries) -> Result<(Vec<f64>, bool)> {
    let trace = lambda_trace(coeffs)?;
    if let Some((round, value)) = trace.degenerate {
        return Err(Error::DegenerateOptimum { round, value });
    }
    let feasible = all_in_unit(&trace.lambdas);
    Ok((trace.lambdas, feasible))
}

fn all_in_unit(lambdas: &[f64]) -> bool {
    lambdas.iter().all(|l| (0.0..=1.0).contains(l))
}

struct LambdaTrace {
    lambdas: Vec<f64>,
    degenerate: Option<(usize, f64)>,
}

/// Forward recursion in the scaled gap `S_t = w_{t-1} d_t`:
///
/// ```text
/// lambda_{t+1} = kappa w_t^2 / (S_t + w_t gamma_t)
/// S_{t+1}      = S_t + w_t gamma_t - kappa w_t^2,      S_T = 0
/// ```
///
/// with `kappa = sum w gamma / sum w^2`. The last denominator equals
/// `kappa w_{T-1}^2` only after cancelling terms of size `sum w gamma`, so the
/// recursion runs in double-double arithmetic.
fn lambda_trace(coeffs: &CoefficientSeries) -> Result<LambdaTrace> {
    coeffs.check()?;
    let w = interpolation_weights(coeffs);
    let mut num = Dd::ZERO;
    let mut den = Dd::ZERO;
    for (&wt, &g) in w.iter().zip(&coeffs.gamma) {
        num = num.add(Dd::prod(wt, g));
        den = den.add(Dd::prod(wt, wt));
    }
    let kappa = num.div(den);
    let mut lambdas = Vec::with_capacity(coeffs.len());
    let mut scaled_gap = Dd::ZERO;
    for (t, (&wt, &g)) in w.iter().zip(&coeffs.gamma).enumerate() {
        let reach_scaled = scaled_gap.add(Dd::prod(wt, g));
        // rho_t d_t + gamma_t = reach_scaled / w_t
        let reach = reach_scaled.value() / wt;
        if reach.abs() <= DEGENERATE_TOL || !reach.is_finite() {
            return Ok(LambdaTrace { lambdas, degenerate: Some((t, reach)) });
        }
        let pull = kappa.mul(Dd::prod(wt, wt));
        lambdas.push(pull.div(reach_scaled).value());
        scaled_gap = reach_scaled.sub(pull);
    }
    Ok(LambdaTrace { lambdas, degenerate: None })
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
    }

    fn fast_two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        Dd { hi: s, lo: b - (s - a) }
    }

    /// Exact product of two doubles.
    fn prod(a: f64, b: f64) -> Dd {
        let p = a * b;
        Dd { hi: p, lo: a.mul_add(b, -p) }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        let t = Dd::two_sum(self.lo, o.lo);
        let v = Dd::fast_two_sum(s.hi, s.lo + t.hi);
        Dd::fast_two_sum(v.hi, v.lo + t.lo)
    }

    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    fn mul(self, o: Dd) -> Dd {
        let p = Dd::prod(self.hi, o.hi);
        Dd::fast_two_sum(p.hi, p.lo + (self.hi * o.lo + self.lo * o.hi))
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd { hi: q1, lo: 0.0 }));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd { hi: q2, lo: 0.0 }));
        let q3 = r.hi / o.hi;
        Dd::fast_two_sum(q1, q2).add(Dd { hi: q3, lo: 0.0 })
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// `sum_t lambda_{t+1}^2 (rho_t d_t + gamma_t)^2` along the worst-case gap
/// recursion `d_{t+1} = (1 - lambda_{t+1})(rho_t d_t + gamma_t)`.
pub fn interpolation_objective(coeffs: &CoefficientSeries, lambdas: &[f64]) -> Result<f64> {
    if lambdas.len() != coeffs.len() {
        return domain(format!(
            "expected {} lambdas, got {}",
            coeffs.len(),
            lambdas.len()
        ));
    }
    let mut gap = 0.0;
    let mut total = 0.0;
    for (t, &lambda) in lambdas.iter().enumerate() {
        let reach = coeffs.rho(t) * gap + coeffs.gamma[t];
        total += (lambda * reach).powi(2);
        gap = (1.0 - lambda) * reach;
    }
    Ok(total)
}

/// `sqrt(coth(a/2) * tanh(T a/2))` = `sqrt((r+1)/(r-1) * (r^T-1)/(r^T+1))`
/// for `r = e^a`, computed without forming `r^T`.
fn saturation_factor(log_rho: f64, rounds: usize) -> f64 {
    let half = 0.5 * log_rho;
    (((rounds as f64) * half).tanh() / half.tanh()).sqrt()
}

/// Closed-form worst-privacy GDP parameter for the table-form coefficients.
pub fn closed_form_bound(cfg: &FlConfig) -> Result<GdpCurve> {
    cfg.validate()?;
    let m_sqrt = (cfg.clients as f64).sqrt();
    let v = cfg.clip_norm;
    let sigma = cfg.sigma;
    let l = cfg.smoothness;
    let mu = cfg.schedule.base_rate;
    let kf = cfg.local_steps as f64;
    let t = cfg.rounds;
    let tail = (2.0 - 1.0 / t as f64).sqrt();

    let value = match cfg.method {
        MethodSpec::FedProx { alpha } => {
            let a = -(-l / alpha).ln_1p();
            2.0 * v / (m_sqrt * alpha * sigma) * saturation_factor(a, t)
        }
        MethodSpec::FedAvg => match cfg.schedule.kind {
            ScheduleKind::Constant => {
                let a = kf * (mu * l).ln_1p();
                2.0 * mu * v * kf / (m_sqrt * sigma) * saturation_factor(a, t)
            }
            ScheduleKind::Cyclic => {
                let c = effective_c(&cfg.schedule, cfg.local_steps)?;
                let ln_k1 = kf.ln_1p();
                let a = c * mu * l * ln_k1;
                2.0 * c * v * ln_k1 / (m_sqrt * sigma) * saturation_factor(a, t)
            }
            ScheduleKind::Stagewise => 2.0 * mu * v * kf / (m_sqrt * sigma) * tail,
            ScheduleKind::Continuous => {
                let z = aggregate_z(&cfg.schedule, cfg.local_steps, t);
                2.0 * z * v / (m_sqrt * sigma) * tail
            }
        },
    };
    GdpCurve::new(value)
}

/// Analytic `T -> infinity` limit of [`closed_form_bound`].
pub fn closed_form_limit(cfg: &FlConfig) -> Result<f64> {
    let big = closed_form_bound(&cfg.with_rounds(1))?.mu();
    let factor = match cfg.method {
        MethodSpec::FedProx { alpha } => {
            let a = -(-cfg.smoothness / alpha).ln_1p();
            (1.0 / (0.5 * a).tanh()).sqrt()
        }
        MethodSpec::FedAvg => match cfg.schedule.kind {
            ScheduleKind::Constant => {
                let a = cfg.local_steps as f64 * (cfg.schedule.base_rate * cfg.smoothness).ln_1p();
                (1.0 / (0.5 * a).tanh()).sqrt()
            }
            ScheduleKind::Cyclic => {
                let c = effective_c(&cfg.schedule, cfg.local_steps)?;
                let a = c * cfg.schedule.base_rate * cfg.smoothness
                    * (cfg.local_steps as f64).ln_1p();
                (1.0 / (0.5 * a).tanh()).sqrt()
            }
            ScheduleKind::Stagewise => std::f64::consts::SQRT_2,
            ScheduleKind::Continuous => {
                // z is taken over the configured horizon
                let z_cfg = aggregate_z(&cfg.schedule, cfg.local_steps, cfg.rounds);
                let z_one = aggregate_z(&cfg.schedule, cfg.local_steps, 1);
                std::f64::consts::SQRT_2 * z_cfg / z_one
            }
        },
    };
    Ok(big * factor)
}

/// Whether the closed form is expected to coincide with the numeric solution.
pub fn bound_kind(cfg: &FlConfig) -> BoundKind {
    match (cfg.method, cfg.schedule.kind) {
        (MethodSpec::FedProx { .. }, _) => BoundKind::ExactEquality,
        (_, ScheduleKind::Constant | ScheduleKind::Cyclic) => BoundKind::ExactEquality,
        _ => BoundKind::UpperBound,
    }
}

/// Full accounting: coefficients for the configured mode, `H_0`, lambdas,
/// and the matching closed form.
pub fn account(cfg: &FlConfig) -> Result<AccountingResult> {
    let coeffs = coefficients(cfg)?;
    let mut result = solve_h0(&coeffs, cfg.clients, cfg.sigma)?;
    result.closed_form_mu = Some(closed_form_bound(cfg)?.mu());
    result.bound_kind = bound_kind(cfg);
    Ok(result)
}

/// GDP parameter from `H_0` on table-form coefficients.
pub fn table_form_mu(cfg: &FlConfig) -> Result<f64> {
    let table = FlConfig { mode: crate::config::CoefficientMode::TableForm, ..cfg.clone() };
    let coeffs = coefficients(&table)?;
    Ok((cfg.clients as f64 * h0(&coeffs)?).sqrt() / cfg.sigma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormReport {
    pub numeric_mu: f64,
    pub closed_form_mu: f64,
    pub bound_kind: BoundKind,
    /// `(numeric - closed) / closed`
    pub relative_gap: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub findings: Vec<String>,
}

/// Relative tolerance for closed-form equality.
pub const CLOSED_FORM_REL_TOL: f64 = 1e-9;
/// Rounding slack when the closed form is only an upper envelope; the two
/// expressions coincide at `T = 1` and may differ there in the last ulp.
pub const ENVELOPE_SLACK: f64 = 1e-12;

/// Cross-checks the numeric `H_0` path against the closed-form theorem.
pub fn verify_closed_forms(cfg: &FlConfig) -> Result<ClosedFormReport> {
    let numeric_mu = table_form_mu(cfg)?;
    let closed_form_mu = closed_form_bound(cfg)?.mu();
    let kind = bound_kind(cfg);
    let relative_gap = (numeric_mu - closed_form_mu) / closed_form_mu;
    let mut findings = Vec::new();
    let passed = match kind {
        BoundKind::ExactEquality => {
            if relative_gap.abs() > CLOSED_FORM_REL_TOL {
                findings.push(format!(
                    "numeric {numeric_mu:e} differs from closed form {closed_form_mu:e} by {relative_gap:e}"
                ));
            }
            relative_gap.abs() <= CLOSED_FORM_REL_TOL
        }
        BoundKind::UpperBound => {
            if relative_gap > ENVELOPE_SLACK {
                findings.push(format!(
                    "numeric {numeric_mu:e} exceeds closed-form envelope {closed_form_mu:e}"
                ));
            }
            relative_gap <= ENVELOPE_SLACK
        }
    };
    Ok(ClosedFormReport { numeric_mu, closed_form_mu, bound_kind: kind, relative_gap, passed, findings })
}

/// What the noise level should be calibrated against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationTarget {
    Gdp(f64),
    EpsDelta(EpsDelta),
}

impl CalibrationTarget {
    pub fn target_mu(&self) -> Result<f64> {
        match *self {
            CalibrationTarget::Gdp(mu) => Ok(mu),
            CalibrationTarget::EpsDelta(ed) => Ok(eps_delta_to_gdp(ed)?.mu()),
        }
    }
}

/// Noise level meeting `target`; every bound scales as `1 / sigma`.
/// The `sigma` field of `cfg` is ignored.
pub fn calibrate_sigma(cfg: &FlConfig, target: CalibrationTarget) -> Result<f64> {
    let target_mu = target.target_mu()?;
    if !(target_mu > 0.0 && target_mu.is_finite()) {
        return domain(format!("target GDP parameter {target_mu} is unattainable"));
    }
    let unit = account(&cfg.with_sigma(1.0))?.gdp.mu();
    Ok(unit / target_mu)
}

/// Illustrative per-round composition without interpolation:
/// `(sqrt(m) / sigma) * sqrt(sum_t gamma_t^2)`.
pub fn naive_composition_baseline(cfg: &FlConfig) -> Result<GdpCurve> {
    let coeffs = coefficients(cfg)?;
    let sq: f64 = coeffs.gamma.iter().map(|g| g * g).sum();
    GdpCurve::new((cfg.clients as f64).sqrt() / cfg.sigma * sq.sqrt())
}

/// `delta` achieved at `epsilon` by an accounting result.
pub fn delta_at(result: &AccountingResult, epsilon: f64) -> Result<f64> {
    Ok(gdp_to_eps_delta(result.gdp, epsilon)?.delta)
}
