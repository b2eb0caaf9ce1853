use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{norm, stream_rng, Stream};
use crate::error::{domain, Result};

/// Distance of each class mean from the origin along the shared direction.
pub const CLUSTER_SEPARATION: f64 = 1.0;

/// One client's samples; `features` is row-major `len() x dims`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientDataset {
    pub client_id: usize,
    pub dims: usize,
    pub features: Vec<f64>,
    /// Class ids in `{0, 1}`.
    pub labels: Vec<u8>,
}

impl ClientDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.features[j * self.dims..(j + 1) * self.dims]
    }

    /// `+1` for class 1, `-1` for class 0.
    pub fn sign(&self, j: usize) -> f64 {
        if self.labels[j] == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// Fraction of samples in class 1.
    pub fn positive_share(&self) -> f64 {
        self.labels.iter().filter(|&&y| y == 1).count() as f64 / self.len() as f64
    }
}

/// Two client unions differing in at most one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacentPair {
    pub base: Vec<ClientDataset>,
    pub modified: Vec<ClientDataset>,
    /// `(i*, j*)`; `None` when `modified == base`.
    pub diff: Option<(usize, usize)>,
}

impl AdjacentPair {
    /// Control pair with `C' = C`.
    pub fn identical(base: Vec<ClientDataset>) -> Self {
        AdjacentPair { modified: base.clone(), base, diff: None }
    }

    pub fn clients(&self) -> usize {
        self.base.len()
    }

    pub fn diff_client(&self) -> Option<usize> {
        self.diff.map(|(i, _)| i)
    }
}

fn gaussian_row<R: Rng>(rng: &mut R, direction: &[f64], sign: f64) -> Vec<f64> {
    direction
        .iter()
        .map(|u| {
            let z: f64 = StandardNormal.sample(rng);
            sign * CLUSTER_SEPARATION * u + z
        })
        .collect()
}

fn cluster_direction(seed: u64, dims: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, Stream::Direction, 0, 0);
    loop {
        let v: Vec<f64> = (0..dims).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm(&v);
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Synthetic clients with class-1 share drawn from `Beta(beta, beta)`, the
/// two-class Dirichlet. Features are `N(+-s u, I)` for a seeded unit `u`.
pub fn make_heterogeneous_data(
    clients: usize,
    n_per_client: usize,
    dims: usize,
    dirichlet_beta: f64,
    seed: u64,
) -> Result<Vec<ClientDataset>> {
    if clients == 0 || n_per_client == 0 || dims == 0 {
        return domain("clients, samples per client and dimension must all be positive");
    }
    if !(dirichlet_beta > 0.0 && dirichlet_beta.is_finite()) {
        return domain(format!("Dirichlet concentration must be positive, got {dirichlet_beta}"));
    }
    let beta = Beta::new(dirichlet_beta, dirichlet_beta)
        .map_err(|e| crate::Error::Domain(format!("Beta({dirichlet_beta}): {e}")))?;
    let direction = cluster_direction(seed, dims);

    Ok((0..clients)
        .map(|i| {
            let mut rng = stream_rng(seed, Stream::Client, i, 0);
            let share: f64 = beta.sample(&mut rng);
            let positives = (share * n_per_client as f64).round() as usize;
            let mut labels: Vec<u8> = (0..n_per_client).map(|j| u8::from(j < positives)).collect();
            labels.shuffle(&mut rng);
            let mut features = Vec::with_capacity(n_per_client * dims);
            for &y in &labels {
                let sign = if y == 1 { 1.0 } else { -1.0 };
                features.extend(gaussian_row(&mut rng, &direction, sign));
            }
            ClientDataset { client_id: i, dims, features, labels }
        })
        .collect())
}

/// Replaces sample `(i*, j*)` by a fresh draw from its original class
/// cluster carrying the flipped label.
pub fn make_adjacent(
    base: &[ClientDataset],
    i_star: usize,
    j_star: usize,
    seed: u64,
) -> Result<AdjacentPair> {
    let Some(client) = base.get(i_star) else {
        return domain(format!("client index {i_star} out of range ({} clients)", base.len()));
    };
    if j_star >= client.len() {
        return domain(format!("sample index {j_star} out of range ({} samples)", client.len()));
    }
    let direction = cluster_direction(seed, client.dims);
    let mut rng = stream_rng(seed, Stream::Replacement, i_star, j_star);
    let sign = client.sign(j_star);
    let row = gaussian_row(&mut rng, &direction, sign);

    let mut modified = base.to_vec();
    let target = &mut modified[i_star];
    let d = target.dims;
    target.features[j_star * d..(j_star + 1) * d].copy_from_slice(&row);
    target.labels[j_star] = 1 - target.labels[j_star];
    Ok(AdjacentPair { base: base.to_vec(), modified, diff: Some((i_star, j_star)) })
}
