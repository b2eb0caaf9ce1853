//! Gaussian trade-off curves and their conversions.
//!
//! Every privacy statement in this crate has the shape `T_G(mu)`, the
//! trade-off between `N(0, 1)` and `N(mu, 1)`, so curves are represented by
//! their shift alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::exec::{map_indexed, Execution};
use crate::gauss::{log_phi, phi, phi_inv};

/// Gaussian-DP trade-off curve `T_G(mu)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GdpCurve {
    mu: f64,
}

impl GdpCurve {
    pub fn new(mu: f64) -> Result<Self> {
        if mu >= 0.0 && mu.is_finite() {
            Ok(GdpCurve { mu })
        } else {
            domain(format!("GDP parameter must be finite and non-negative, got {mu}"))
        }
    }

    pub fn mu(self) -> f64 {
        self.mu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsDelta {
    pub epsilon: f64,
    pub delta: f64,
}

impl EpsDelta {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return domain(format!("epsilon must be finite and non-negative, got {epsilon}"));
        }
        if !(0.0..=1.0).contains(&delta) {
            return domain(format!("delta must lie in [0, 1], got {delta}"));
        }
        Ok(EpsDelta { epsilon, delta })
    }
}

/// Rényi-DP budget `(order, epsilon)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenyiBudget {
    pub order: f64,
    pub epsilon: f64,
}

/// `beta = Φ(Φ⁻¹(1 - alpha) - mu)`, the smallest type-II error at level `alpha`.
pub fn gdp_tradeoff(curve: GdpCurve, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return domain(format!("type-I error must lie in [0, 1], got {alpha}"));
    }
    if alpha == 0.0 {
        return Ok(1.0);
    }
    if alpha == 1.0 {
        return Ok(0.0);
    }
    // Φ⁻¹(1 - α) = -Φ⁻¹(α) keeps precision for small α.
    Ok(phi(-phi_inv(alpha) - curve.mu))
}

/// Composition of Gaussian curves: shifts add in quadrature.
pub fn compose_gdp<I>(curves: I) -> GdpCurve
where
    I: IntoIterator<Item = GdpCurve>,
{
    let mu = curves.into_iter().fold(0.0f64, |acc, c| acc.hypot(c.mu));
    GdpCurve { mu }
}

/// `delta(eps) = Φ(-eps/mu + mu/2) - e^eps Φ(-eps/mu - mu/2)`.
pub fn gdp_to_eps_delta(curve: GdpCurve, epsilon: f64) -> Result<EpsDelta> {
    if !(epsilon >= 0.0) || epsilon.is_nan() {
        return domain(format!("epsilon must be non-negative, got {epsilon}"));
    }
    let mu = curve.mu;
    if mu == 0.0 {
        return Ok(EpsDelta { epsilon, delta: 0.0 });
    }
    if epsilon == f64::INFINITY {
        return Ok(EpsDelta { epsilon, delta: 0.0 });
    }
    let a = -epsilon / mu + 0.5 * mu;
    let b = -epsilon / mu - 0.5 * mu;
    // e^eps Φ(b) evaluated in log space; it overflows otherwise for large eps.
    let second = (epsilon + log_phi(b)).exp();
    let delta = (phi(a) - second).clamp(0.0, 1.0);
    Ok(EpsDelta { epsilon, delta })
}

/// `(order, mu² order / 2)`.
pub fn gdp_to_rdp(curve: GdpCurve, order: f64) -> Result<RenyiBudget> {
    if !(order > 1.0) || !order.is_finite() {
        return domain(format!("Rényi order must exceed 1, got {order}"));
    }
    Ok(RenyiBudget { order, epsilon: 0.5 * curve.mu * curve.mu * order })
}

const BISECTION_REL_TOL: f64 = 1e-10;

/// Largest `mu` whose `delta(eps)` does not exceed `target.delta`.
pub fn eps_delta_to_gdp(target: EpsDelta) -> Result<GdpCurve> {
    let EpsDelta { epsilon, delta } = target;
    if !(delta > 0.0 && delta < 1.0) {
        return domain(format!("target delta must lie strictly inside (0, 1), got {delta}"));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return domain(format!("target epsilon must be finite and non-negative, got {epsilon}"));
    }
    let delta_at = |mu: f64| gdp_to_eps_delta(GdpCurve { mu }, epsilon).map(|r| r.delta);

    let mut lo = 1e-8;
    let mut hi = 100.0;
    while delta_at(lo)? > delta {
        lo *= 0.5;
        if lo < 1e-300 {
            return domain(format!("no positive mu attains delta <= {delta} at epsilon {epsilon}"));
        }
    }
    while delta_at(hi)? <= delta {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return domain(format!("delta {delta} is not attained below mu = 1e12"));
        }
    }
    while hi - lo > BISECTION_REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if delta_at(mid)? <= delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(GdpCurve { mu: lo })
}

/// One Monte-Carlo trade-off point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    /// Nominal level of the threshold test.
    pub alpha: f64,
    /// Fraction of null samples rejected.
    pub alpha_hat: f64,
    /// Fraction of alternative samples accepted (type-II error).
    pub beta_hat: f64,
    /// Binomial standard error of `beta_hat`.
    pub std_error: f64,
}

const MC_CHUNK: usize = 1 << 15;
pub const MC_MIN_SAMPLES: usize = 10_000;

/// Monte-Carlo estimate of the Neyman-Pearson trade-off between `N(0, 1)`
/// and `N(mu, 1)`.
///
/// For each `alpha` the likelihood-ratio test rejects the null when the
/// observation exceeds `Φ⁻¹(1 - alpha)`; the type-II error is the fraction of
/// `samples` draws from `N(mu, 1)` that fall below that threshold.
pub fn mc_tradeoff_estimate(
    mu: f64,
    alpha_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<TradeoffPoint>> {
    mc_tradeoff_estimate_with(mu, alpha_grid, samples, seed, Execution::default())
}

pub fn mc_tradeoff_estimate_with(
    mu: f64,
    alpha_grid: &[f64],
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<TradeoffPoint>> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return domain(format!("mu must be finite and non-negative, got {mu}"));
    }
    if samples < MC_MIN_SAMPLES {
        return domain(format!("need at least {MC_MIN_SAMPLES} samples, got {samples}"));
    }
    for &a in alpha_grid {
        if !(0.0..=1.0).contains(&a) {
            return domain(format!("alpha grid entry {a} outside [0, 1]"));
        }
    }
    let thresholds: Vec<f64> = alpha_grid.iter().map(|&a| -phi_inv(a)).collect();
    let n_chunks = samples.div_ceil(MC_CHUNK);

    // Chunk j always draws from stream j, so counts do not depend on scheduling.
    let partial = map_indexed(n_chunks, exec, |j| {
        let len = MC_CHUNK.min(samples - j * MC_CHUNK);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let mut null: Vec<f64> = Vec::with_capacity(len);
        let mut alt: Vec<f64> = Vec::with_capacity(len);
        for _ in 0..len {
            let x: f64 = StandardNormal.sample(&mut rng);
            let y: f64 = StandardNormal.sample(&mut rng);
            null.push(x);
            alt.push(y + mu);
        }
        null.sort_unstable_by(f64::total_cmp);
        alt.sort_unstable_by(f64::total_cmp);
        thresholds
            .iter()
            .map(|&thr| {
                let rejected = len - null.partition_point(|&x| x <= thr);
                let accepted = alt.partition_point(|&y| y <= thr);
                (rejected, accepted)
            })
            .collect::<Vec<_>>()
    });

    let n = samples as f64;
    Ok(alpha_grid
        .iter()
        .enumerate()
        .map(|(i, &alpha)| {
            let (rej, acc) = partial
                .iter()
                .fold((0usize, 0usize), |(r, a), p| (r + p[i].0, a + p[i].1));
            let beta_hat = acc as f64 / n;
            TradeoffPoint {
                alpha,
                alpha_hat: rej as f64 / n,
                beta_hat,
                std_error: (beta_hat * (1.0 - beta_hat) / n).sqrt(),
            }
        })
        .collect())
}
