//! Deterministic federated trainer measuring empirical sensitivity on
//! adjacent datasets.
//!
//! The task is binary logistic regression on synthetic two-class Gaussian
//! clusters split across clients with skewed label proportions. Training
//! runs twice in lockstep, on `C` and on `C'`, with identical noise draws,
//! so the parameter gap isolates the single-sample change.

mod data;
mod local;
mod run;
mod smoothness;

pub use data::{make_adjacent, make_heterogeneous_data, AdjacentPair, ClientDataset};
pub use local::{
    local_path, local_update_fedavg, local_update_fedprox, logistic_gradient, LocalStats,
};
pub use run::{
    default_pair, run_adjacent, run_adjacent_with, simulate, simulate_with, sweep_sensitivity, SimConfig,
    SimRun, SweepRow, TraceRow,
};
pub use smoothness::{estimate_smoothness, SmoothnessEstimate, SMOOTHNESS_SAFETY};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags separating the random streams derived from one seed.
#[derive(Clone, Copy)]
#[repr(u64)]
pub(crate) enum Stream {
    Direction = 1,
    Client = 2,
    Replacement = 3,
    Noise = 4,
    Probe = 5,
}

/// Independent generator for `(seed, tag, a, b)`; `a < 2^28`, `b < 2^28`.
pub(crate) fn stream_rng(seed: u64, tag: Stream, a: usize, b: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((tag as u64) << 56) | ((a as u64 & 0x0fff_ffff) << 28) | (b as u64 & 0x0fff_ffff));
    rng
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
