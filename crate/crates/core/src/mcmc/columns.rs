//! Gibbs sweep over the probe-to-column-cluster allocations of one platform.
//!
//! Each probe is reassigned from its full conditional: the PDP predictive
//! weight times the Gaussian likelihood of its column under each cluster's
//! latent column. Opening a new cluster is handled with auxiliary components
//! whose latent columns are drawn from the atom hierarchy.

use rand::Rng;

use crate::mcmc::atoms::{sample_log_weights, AtomStore};
use crate::model::{ClusterState, LatentCell, LatentMatrices, TransformedDataset};
use crate::partition::canonicalize;

/// Per row cluster sum and count of one probe's values.
fn probe_row_sums(z: &[f64], state: &ClusterState, sums: &mut Vec<f64>) {
    sums.clear();
    sums.resize(state.h(), 0.0);
    for (i, &x) in z.iter().enumerate() {
        sums[state.rows[i]] += x;
    }
}

#[inline]
fn column_log_lik(phi: impl Iterator<Item = f64>, sums: &[f64], counts: &[usize], inv_var: f64) -> f64 {
    phi.zip(sums.iter().zip(counts))
        .map(|(p, (&s, &n))| p * s - 0.5 * n as f64 * p * p)
        .sum::<f64>()
        * inv_var
}

/// Unnormalised log full-conditional weights of probe `j` for the existing
/// clusters, with `j` itself removed from its cluster's count. Terms that are
/// constant across clusters are dropped.
pub fn existing_column_log_weights(
    state: &ClusterState,
    latents: &LatentMatrices,
    data: &TransformedDataset,
    t: usize,
    j: usize,
    discount: f64,
) -> Vec<f64> {
    let mut sums = Vec::new();
    probe_row_sums(data.platforms[t].probe(j), state, &mut sums);
    let sigma = latents.noise_sd[t];
    let inv_var = 1.0 / (sigma * sigma);
    let own = state.columns[t][j];
    let m = &latents.platforms[t];
    (0..state.k(t))
        .map(|k| {
            let size = state.column_sizes[t][k] - usize::from(k == own);
            if size == 0 {
                return f64::NEG_INFINITY;
            }
            (size as f64 - discount).ln()
                + column_log_lik((0..m.rows()).map(|h| m.value(h, k)), &sums, &state.row_sizes, inv_var)
        })
        .collect()
}

/// One sweep over all probes of platform `t`. Labels are canonical on return.
#[allow(clippy::too_many_arguments)]
pub fn update_column_allocations<R: Rng + ?Sized>(
    state: &mut ClusterState,
    latents: &mut LatentMatrices,
    store: &mut AtomStore,
    data: &TransformedDataset,
    t: usize,
    discount: f64,
    alpha1: f64,
    n_aux: usize,
    rng: &mut R,
) {
    let n_aux = n_aux.max(1);
    let platform = &data.platforms[t];
    let sigma = latents.noise_sd[t];
    let inv_var = 1.0 / (sigma * sigma);
    let h = state.h();
    let mut sums = Vec::with_capacity(h);
    let mut weights = Vec::new();

    for j in 0..platform.p() {
        probe_row_sums(platform.probe(j), state, &mut sums);
        let old = state.columns[t][j];
        state.column_sizes[t][old] -= 1;
        let mut aux: Vec<Vec<LatentCell>> = Vec::with_capacity(n_aux);
        if state.column_sizes[t][old] == 0 {
            aux.push(latents.platforms[t].remove_column(old));
            state.column_sizes[t].remove(old);
            for c in state.columns[t].iter_mut() {
                if *c > old {
                    *c -= 1;
                }
            }
        }
        while aux.len() < n_aux {
            aux.push((0..h).map(|_| store.seat_from_prior(t, rng)).collect());
        }

        let k_now = state.k(t);
        let m = &latents.platforms[t];
        weights.clear();
        for k in 0..k_now {
            let size = state.column_sizes[t][k] as f64;
            weights.push(
                (size - discount).ln()
                    + column_log_lik((0..h).map(|r| m.value(r, k)), &sums, &state.row_sizes, inv_var),
            );
        }
        let new_w = ((alpha1 + k_now as f64 * discount) / n_aux as f64).ln();
        for col in &aux {
            weights.push(new_w + column_log_lik(col.iter().map(|c| c.value), &sums, &state.row_sizes, inv_var));
        }

        let pick = sample_log_weights(&weights, rng);
        if pick < k_now {
            state.columns[t][j] = pick;
            state.column_sizes[t][pick] += 1;
            for col in aux.iter().rev() {
                for cell in col.iter().rev() {
                    store.unseat(t, cell);
                }
            }
        } else {
            let chosen = pick - k_now;
            for (a, col) in aux.iter().enumerate().rev() {
                if a != chosen {
                    for cell in col.iter().rev() {
                        store.unseat(t, cell);
                    }
                }
            }
            latents.platforms[t].push_column(&aux[chosen]);
            state.column_sizes[t].push(1);
            state.columns[t][j] = k_now;
        }
    }

    let (labels, order) = canonicalize(&state.columns[t]);
    state.columns[t] = labels;
    state.column_sizes[t] = order.iter().map(|&k| state.column_sizes[t][k]).collect();
    latents.platforms[t].permute_columns(&order);
}
