//! Starting state from a separate, naive analysis of each platform.

use kodama::{linkage, Method};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mcmc::atoms::{AtomStore, FranchiseParams};
use crate::model::{
    block_stats, ClusterState, Hyperparameters, LatentMatrices, LatentMatrix, TransformedDataset,
};
use crate::partition::canonicalize;

/// Dissimilarity used by the agglomerative initialiser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkageDistance {
    /// `1 - r` with Pearson correlation `r`. Constant vectors are at distance
    /// 0 from each other and 1 from everything else.
    Correlation,
    /// Root-mean-square difference divided by the median nearest-neighbour
    /// root-mean-square difference, so the cut height is in units of the
    /// typical noise-level distance.
    RelativeRms,
}

/// How one dimension is initialised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum LinkageInit {
    /// Everything in one cluster.
    Single,
    /// Complete-linkage clustering cut at `height`.
    Complete { distance: LinkageDistance, height: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    pub columns: LinkageInit,
    pub rows: LinkageInit,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            columns: LinkageInit::Complete {
                distance: LinkageDistance::Correlation,
                height: 0.5,
            },
            rows: LinkageInit::Complete {
                distance: LinkageDistance::RelativeRms,
                height: 1.3,
            },
        }
    }
}

fn correlation_distances(vectors: &[&[f64]]) -> Vec<f64> {
    let standardized: Vec<Option<Vec<f64>>> = vectors
        .iter()
        .map(|v| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
            if ss <= 1e-300 {
                None
            } else {
                let s = ss.sqrt();
                Some(v.iter().map(|x| (x - mean) / s).collect())
            }
        })
        .collect();
    let m = vectors.len();
    let mut out = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for a in 0..m {
        for b in a + 1..m {
            out.push(match (&standardized[a], &standardized[b]) {
                (Some(x), Some(y)) => {
                    let r: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
                    (1.0 - r).max(0.0)
                }
                (None, None) => 0.0,
                _ => 1.0,
            });
        }
    }
    out
}

fn relative_rms_distances(vectors: &[&[f64]]) -> Vec<f64> {
    let m = vectors.len();
    let mut out = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    let mut nearest = vec![f64::INFINITY; m];
    for a in 0..m {
        for b in a + 1..m {
            let n = vectors[a].len() as f64;
            let d = (vectors[a]
                .iter()
                .zip(vectors[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                / n)
                .sqrt();
            nearest[a] = nearest[a].min(d);
            nearest[b] = nearest[b].min(d);
            out.push(d);
        }
    }
    nearest.sort_by(f64::total_cmp);
    let scale = nearest.get(m / 2).copied().unwrap_or(1.0);
    if scale > 0.0 && scale.is_finite() {
        for d in &mut out {
            *d /= scale;
        }
    }
    out
}

/// Complete-linkage clusters of `vectors` cut at `height`, canonically
/// labeled.
pub fn complete_linkage_cut(vectors: &[&[f64]], distance: LinkageDistance, height: f64) -> Vec<usize> {
    let m = vectors.len();
    if m <= 1 {
        return vec![0; m];
    }
    let mut condensed = match distance {
        LinkageDistance::Correlation => correlation_distances(vectors),
        LinkageDistance::RelativeRms => relative_rms_distances(vectors),
    };
    let dendrogram = linkage(&mut condensed, m, Method::Complete);
    // union-find over merges below the cut
    let mut parent: Vec<usize> = (0..2 * m).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (s, step) in dendrogram.steps().iter().enumerate() {
        let node = m + s;
        if step.dissimilarity <= height {
            let a = find(&mut parent, step.cluster1);
            let b = find(&mut parent, step.cluster2);
            parent[a] = node;
            parent[b] = node;
        }
    }
    let roots: Vec<usize> = (0..m).map(|i| find(&mut parent, i)).collect();
    canonicalize(&roots).0
}

fn initial_labels(vectors: &[&[f64]], how: LinkageInit) -> Vec<usize> {
    match how {
        LinkageInit::Single => vec![0; vectors.len()],
        LinkageInit::Complete { distance, height } => complete_linkage_cut(vectors, distance, height),
    }
}

/// Fresh atom store for the model hyperparameters.
pub fn empty_store(hyper: &Hyperparameters, n_platforms: usize) -> AtomStore {
    AtomStore::franchise(
        FranchiseParams {
            local_mass: hyper.alpha3,
            global_mass: hyper.alpha4,
            mu0: hyper.mu0,
            tau0: hyper.tau0,
        },
        n_platforms,
    )
}

/// Seat a latent cell for every block of `state`. Under the hierarchy each
/// cell starts at its block mean with its own atom. The noise scale is the
/// pooled residual sd of that fit (floored at 1e-3).
pub fn seat_latents<R: Rng + ?Sized>(
    data: &TransformedDataset,
    state: &ClusterState,
    store: &mut AtomStore,
    per_platform_sigma: bool,
    rng: &mut R,
) -> LatentMatrices {
    let stats = block_stats(data, state);
    let mut residual = vec![(0.0, 0.0); data.n_platforms()];
    for (t, s) in stats.iter().enumerate() {
        for b in s {
            residual[t].0 += b.sum_sq - b.sum * b.sum / b.count;
            residual[t].1 += b.count;
        }
    }
    let pooled = {
        let (ss, n): (f64, f64) = residual.iter().fold((0.0, 0.0), |a, r| (a.0 + r.0, a.1 + r.1));
        (ss / n).sqrt().max(1e-3)
    };
    let noise_sd: Vec<f64> = residual
        .iter()
        .map(|(ss, n)| if per_platform_sigma { (ss / n).sqrt().max(1e-3) } else { pooled })
        .collect();
    let platforms = stats
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let inv_var = 1.0 / (noise_sd[t] * noise_sd[t]);
            let cells = s.iter().map(|b| store.seat_initial(t, b, inv_var, rng)).collect();
            LatentMatrix::new(state.h(), state.k(t), cells).expect("block count matches")
        })
        .collect();
    LatentMatrices { platforms, noise_sd }
}

/// Initial allocations, latent matrices and atom store.
pub fn init_state<R: Rng + ?Sized>(
    data: &TransformedDataset,
    hyper: &Hyperparameters,
    init: &InitConfig,
    per_platform_sigma: bool,
    rng: &mut R,
) -> Result<(ClusterState, LatentMatrices, AtomStore)> {
    let columns: Vec<Vec<usize>> = data
        .platforms
        .iter()
        .map(|p| {
            let probes: Vec<&[f64]> = (0..p.p()).map(|j| p.probe(j)).collect();
            initial_labels(&probes, init.columns)
        })
        .collect();
    let profiles: Vec<Vec<f64>> = (0..data.n())
        .map(|i| data.platforms.iter().flat_map(|p| p.patient(i).iter().copied()).collect())
        .collect();
    let refs: Vec<&[f64]> = profiles.iter().map(Vec::as_slice).collect();
    let rows = initial_labels(&refs, init.rows);
    let state = ClusterState::new(columns, rows)?;
    let mut store = empty_store(hyper, data.n_platforms());
    let latents = seat_latents(data, &state, &mut store, per_platform_sigma, rng);
    Ok((state, latents, store))
}
