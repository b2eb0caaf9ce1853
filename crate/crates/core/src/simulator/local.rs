use serde::{Deserialize, Serialize};

use super::{norm, ClientDataset};
use crate::error::{Error, Result};
use crate::schedules::Schedule;

/// Applied norms may exceed `V` by this relative rounding margin.
const CLIP_SLACK: f64 = 1e-12;

/// Per-call clipping statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalStats {
    /// Steps whose raw gradient norm exceeded `V`.
    pub clipped: usize,
    pub max_applied_norm: f64,
}

/// `1 / (1 + e^z)` without overflow.
#[inline]
fn sigmoid_neg(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Full-batch gradient of the mean logistic loss `ln(1 + exp(-y w.x))`,
/// written into `grad`.
pub fn logistic_gradient(w: &[f64], data: &ClientDataset, grad: &mut [f64]) {
    grad.iter_mut().for_each(|g| *g = 0.0);
    for j in 0..data.len() {
        let x = data.row(j);
        let y = data.sign(j);
        let margin = y * super::dot(w, x);
        let coef = -y * sigmoid_neg(margin);
        for (g, xi) in grad.iter_mut().zip(x) {
            *g += coef * xi;
        }
    }
    let inv_n = 1.0 / data.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv_n);
}

/// Scales `g` onto the ball of radius `clip_norm`; returns whether it did.
#[inline]
fn clip(g: &mut [f64], clip_norm: f64) -> bool {
    let n = norm(g);
    if n > clip_norm {
        let scale = clip_norm / n;
        g.iter_mut().for_each(|x| *x *= scale);
        true
    } else {
        false
    }
}

/// `K` clipped gradient steps from `w`, with the proximal pull
/// `alpha (u - anchor)` added when `alpha != 0`.
///
/// Returns the final iterate; `path` receives every iterate including `w`
/// when given.
#[allow(clippy::too_many_arguments)]
pub fn local_path(
    w: &[f64],
    anchor: &[f64],
    data: &ClientDataset,
    schedule: &Schedule,
    round: usize,
    local_steps: usize,
    clip_norm: f64,
    alpha: f64,
    mut path: Option<&mut Vec<Vec<f64>>>,
) -> Result<(Vec<f64>, LocalStats)> {
    let mut u = w.to_vec();
    let mut g = vec![0.0; w.len()];
    let mut stats = LocalStats::default();
    if let Some(p) = path.as_deref_mut() {
        p.push(u.clone());
    }
    for k in 0..local_steps {
        logistic_gradient(&u, data, &mut g);
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { round, step: k });
        }
        if clip(&mut g, clip_norm) {
            stats.clipped += 1;
        }
        let applied = norm(&g);
        if applied > clip_norm * (1.0 + CLIP_SLACK) {
            return Err(Error::SimulationAborted {
                round,
                reason: format!("applied gradient norm {applied} exceeds clip norm {clip_norm}"),
            });
        }
        stats.max_applied_norm = stats.max_applied_norm.max(applied);
        let eta = schedule.lr_at(round, k, local_steps);
        if alpha != 0.0 {
            for ((ui, gi), ai) in u.iter_mut().zip(&g).zip(anchor) {
                *ui -= eta * (gi + alpha * (*ui - ai));
            }
        } else {
            for (ui, gi) in u.iter_mut().zip(&g) {
                *ui -= eta * gi;
            }
        }
        if let Some(p) = path.as_deref_mut() {
            p.push(u.clone());
        }
    }
    Ok((u, stats))
}

/// `u_{k+1} = u_k - eta_{k,t} clip(grad f(u_k))`, `K` times.
pub fn local_update_fedavg(
    w: &[f64],
    data: &ClientDataset,
    schedule: &Schedule,
    round: usize,
    local_steps: usize,
    clip_norm: f64,
) -> Result<(Vec<f64>, LocalStats)> {
    local_path(w, w, data, schedule, round, local_steps, clip_norm, 0.0, None)
}

/// `u_{k+1} = u_k - eta_{k,t} (clip(grad f(u_k)) + alpha (u_k - anchor))`.
#[allow(clippy::too_many_arguments)]
pub fn local_update_fedprox(
    w: &[f64],
    anchor: &[f64],
    data: &ClientDataset,
    schedule: &Schedule,
    round: usize,
    local_steps: usize,
    clip_norm: f64,
    alpha: f64,
) -> Result<(Vec<f64>, LocalStats)> {
    local_path(w, anchor, data, schedule, round, local_steps, clip_norm, alpha, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::ScheduleKind;
    use crate::simulator::{distance, make_heterogeneous_data};

    fn one_sample(x: Vec<f64>, label: u8) -> ClientDataset {
        ClientDataset { client_id: 0, dims: x.len(), features: x, labels: vec![label] }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let data = make_heterogeneous_data(1, 40, 10, 1.0, 3).unwrap().remove(0);
        let w: Vec<f64> = (0..10).map(|i| 0.1 * i as f64 - 0.3).collect();
        let loss = |w: &[f64]| -> f64 {
            (0..data.len())
                .map(|j| (-data.sign(j) * super::super::dot(w, data.row(j))).exp().ln_1p())
                .sum::<f64>()
                / data.len() as f64
        };
        let mut g = vec![0.0; 10];
        logistic_gradient(&w, &data, &mut g);
        for i in 0..10 {
            let h = 1e-6;
            let mut wp = w.clone();
            wp[i] += h;
            let mut wm = w.clone();
            wm[i] -= h;
            let fd = (loss(&wp) - loss(&wm)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8, "coord {i}");
        }
    }

    #[test]
    fn clipping_examples() {
        let mut g = vec![6.0, 8.0];
        assert!(clip(&mut g, 5.0));
        assert!((norm(&g) - 5.0).abs() < 1e-15);
        let mut g = vec![0.3, 0.4];
        assert!(!clip(&mut g, 1.0));
        assert_eq!(g, vec![0.3, 0.4]);
    }

    #[test]
    fn single_step_is_one_clipped_step() {
        // at w = 0 the gradient of one sample is -y x / 2
        let data = one_sample(vec![4.0, 0.0, 0.0], 1);
        let s = Schedule::constant(0.1);
        let (u, stats) = local_update_fedavg(&[0.0; 3], &data, &s, 0, 1, 1.0).unwrap();
        // raw norm 2 = 2V, applied norm exactly V
        assert_eq!(stats.clipped, 1);
        assert!((stats.max_applied_norm - 1.0).abs() < 1e-15);
        assert!((u[0] - 0.1).abs() < 1e-15);
        let (u, stats) = local_update_fedavg(&[0.0; 3], &data, &s, 0, 1, 4.0).unwrap();
        assert_eq!(stats.clipped, 0);
        assert!((u[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn prox_zero_alpha_is_fedavg_bitwise() {
        let data = make_heterogeneous_data(1, 50, 10, 0.3, 9).unwrap().remove(0);
        let w: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let anchor = vec![0.5; 10];
        for kind in [ScheduleKind::Constant, ScheduleKind::Cyclic, ScheduleKind::Continuous] {
            let s = Schedule::new(kind, 0.2).unwrap();
            let a = local_update_fedavg(&w, &data, &s, 3, 7, 0.5).unwrap();
            let b = local_update_fedprox(&w, &anchor, &data, &s, 3, 7, 0.5, 0.0).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn prox_single_step_zero_gradient() {
        // a sample orthogonal to w gives gradient -y x / 2; zero features give 0
        let data = one_sample(vec![0.0, 0.0], 1);
        let s = Schedule::constant(0.1);
        let w = [1.0, -2.0];
        let anchor = [0.0, 1.0];
        let (u, _) = local_update_fedprox(&w, &anchor, &data, &s, 0, 1, 10.0, 1.0).unwrap();
        assert_eq!(u, vec![1.0 - 0.1 * 1.0, -2.0 - 0.1 * -3.0]);
    }

    #[test]
    fn large_alpha_pins_to_anchor() {
        let data = make_heterogeneous_data(1, 50, 10, 0.3, 2).unwrap().remove(0);
        let anchor = vec![0.2; 10];
        let s = Schedule::constant(1e-6);
        let mut prev = f64::INFINITY;
        for alpha in [1e2, 1e3, 1e4, 1e5, 1e6] {
            let (u, _) = local_update_fedprox(&anchor, &anchor, &data, &s, 0, 5, 10.0, alpha).unwrap();
            let moved = distance(&u, &anchor);
            assert!(moved < prev, "alpha={alpha}");
            prev = moved;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn path_records_every_iterate() {
        let data = make_heterogeneous_data(1, 10, 10, 0.3, 2).unwrap().remove(0);
        let mut path = Vec::new();
        let w = vec![0.0; 10];
        let (u, _) = local_path(&w, &w, &data, &Schedule::constant(0.1), 0, 4, 1.0, 0.0, Some(&mut path))
            .unwrap();
        assert_eq!(path.len(), 5);
        assert_eq!(path[4], u);
    }

    #[test]
    fn non_finite_parameters_are_reported() {
        let data = make_heterogeneous_data(1, 10, 10, 0.3, 2).unwrap().remove(0);
        let w = vec![f64::NAN; 10];
        let err = local_update_fedavg(&w, &data, &Schedule::constant(0.1), 4, 3, 1.0).unwrap_err();
        assert_eq!(err, Error::NonFinite { round: 4, step: 0 });
    }
}
