use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{distance, local::logistic_gradient, norm, stream_rng, ClientDataset, Stream};
use crate::error::{domain, Result};
use crate::exec::{map_indexed, Execution};

/// Multiplier applied to the measured smoothness before it enters the envelope.
pub const SMOOTHNESS_SAFETY: f64 = 1.1;

const POWER_ITERATIONS: usize = 30;
const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessEstimate {
    /// Largest observed `||grad f(a) - grad f(b)|| / ||a - b||`.
    pub empirical: f64,
    /// `SMOOTHNESS_SAFETY * empirical`.
    pub envelope: f64,
    /// Gradient-pair evaluations per dataset.
    pub probes: usize,
}

fn random_unit<R: Rng>(rng: &mut R, dims: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dims).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Uniform point in the ball of `radius` around `center`.
fn ball_point<R: Rng>(rng: &mut R, center: &[f64], radius: f64) -> Vec<f64> {
    let dims = center.len();
    let dir = random_unit(rng, dims);
    let r = radius * rng.random::<f64>().powf(1.0 / dims as f64);
    center.iter().zip(dir).map(|(c, d)| c + r * d).collect()
}

fn gradient_ratio(data: &ClientDataset, a: &[f64], b: &[f64], ga: &mut [f64], gb: &mut [f64]) -> f64 {
    logistic_gradient(a, data, ga);
    logistic_gradient(b, data, gb);
    let gap = distance(a, b);
    if gap == 0.0 {
        0.0
    } else {
        distance(ga, gb) / gap
    }
}

/// Largest finite-difference curvature found by power iteration at `center`.
fn power_probe(data: &ClientDataset, center: &[f64], seed_dir: Vec<f64>) -> (f64, usize) {
    let dims = center.len();
    let mut g0 = vec![0.0; dims];
    let mut g1 = vec![0.0; dims];
    logistic_gradient(center, data, &mut g0);
    let mut v = seed_dir;
    let mut best = 0.0_f64;
    for _ in 0..POWER_ITERATIONS {
        let shifted: Vec<f64> = center.iter().zip(&v).map(|(c, d)| c + FD_STEP * d).collect();
        logistic_gradient(&shifted, data, &mut g1);
        let hv: Vec<f64> = g1.iter().zip(&g0).map(|(a, b)| (a - b) / FD_STEP).collect();
        let n = norm(&hv);
        best = best.max(n);
        if n == 0.0 {
            break;
        }
        v = hv.into_iter().map(|x| x / n).collect();
    }
    (best, POWER_ITERATIONS)
}

/// Empirical smoothness of the logistic loss over `datasets`.
///
/// Each dataset receives `probes` random gradient pairs drawn inside balls
/// of `radius` around the `centers`, plus finite-difference power iteration
/// at every center so the top curvature direction is always sampled.
pub fn estimate_smoothness(
    datasets: &[&ClientDataset],
    centers: &[Vec<f64>],
    radius: f64,
    probes: usize,
    seed: u64,
    exec: Execution,
) -> Result<SmoothnessEstimate> {
    if datasets.is_empty() || centers.is_empty() {
        return domain("smoothness probing needs at least one dataset and one center");
    }
    if !(radius >= 0.0 && radius.is_finite()) {
        return domain(format!("probe radius must be finite and non-negative, got {radius}"));
    }
    let per_dataset = map_indexed(datasets.len(), exec, |i| {
        let data = datasets[i];
        let dims = data.dims;
        let mut rng = stream_rng(seed, Stream::Probe, i, 0);
        let mut ga = vec![0.0; dims];
        let mut gb = vec![0.0; dims];
        let mut best = 0.0_f64;
        let mut used = 0;
        for center in centers {
            let (curv, n) = power_probe(data, center, random_unit(&mut rng, dims));
            best = best.max(curv);
            used += n;
        }
        for p in 0..probes {
            let center = &centers[p % centers.len()];
            let a = ball_point(&mut rng, center, radius);
            let b = ball_point(&mut rng, center, radius);
            best = best.max(gradient_ratio(data, &a, &b, &mut ga, &mut gb));
        }
        (best, used + probes)
    });
    let empirical = per_dataset.iter().map(|r| r.0).fold(0.0, f64::max);
    let probes = per_dataset.iter().map(|r| r.1).max().unwrap_or(0);
    if !(empirical > 0.0 && empirical.is_finite()) {
        return domain(format!("smoothness probe returned {empirical}"));
    }
    Ok(SmoothnessEstimate { empirical, envelope: SMOOTHNESS_SAFETY * empirical, probes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::make_heterogeneous_data;

    /// `lambda_max(X^T X) / (4 n)`: the Hessian at the origin dominates all others.
    fn curvature_at_origin(data: &ClientDataset) -> f64 {
        let d = data.dims;
        let mut v = vec![1.0 / (d as f64).sqrt(); d];
        let mut lambda = 0.0;
        for _ in 0..500 {
            let mut xv = vec![0.0; d];
            for j in 0..data.len() {
                let x = data.row(j);
                let s = super::super::dot(x, &v);
                for (o, xi) in xv.iter_mut().zip(x) {
                    *o += s * xi;
                }
            }
            lambda = norm(&xv);
            v = xv.into_iter().map(|x| x / lambda).collect();
        }
        lambda / (4.0 * data.len() as f64)
    }

    #[test]
    fn estimate_reaches_global_curvature() {
        let data = make_heterogeneous_data(3, 80, 10, 0.5, 11).unwrap();
        let refs: Vec<&ClientDataset> = data.iter().collect();
        let centers = vec![vec![0.0; 10], vec![0.3; 10]];
        let est = estimate_smoothness(&refs, &centers, 1.0, 200, 5, Execution::Sequential).unwrap();
        let global = data.iter().map(curvature_at_origin).fold(0.0, f64::max);
        assert!(est.empirical <= global * (1.0 + 1e-3), "{} vs {global}", est.empirical);
        assert!(est.empirical >= global * (1.0 - 1e-3), "{} vs {global}", est.empirical);
        assert!((est.envelope - 1.1 * est.empirical).abs() < 1e-15);
    }

    #[test]
    fn modes_agree() {
        let data = make_heterogeneous_data(4, 30, 10, 0.5, 1).unwrap();
        let refs: Vec<&ClientDataset> = data.iter().collect();
        let centers = vec![vec![0.1; 10]];
        let a = estimate_smoothness(&refs, &centers, 2.0, 50, 9, Execution::Sequential).unwrap();
        let b = estimate_smoothness(&refs, &centers, 2.0, 50, 9, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
