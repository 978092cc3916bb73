//! Gibbs sweep over the global subject-to-row-cluster allocations.
//!
//! A subject's full conditional multiplies the Chinese-restaurant weight of
//! each row cluster by the likelihood of its measurements on every platform.
//! New row clusters come from auxiliary latent rows drawn across all
//! platforms from the atom hierarchy.

use rand::Rng;

use crate::mcmc::atoms::{sample_log_weights, AtomStore};
use crate::model::{ClusterState, LatentCell, LatentMatrices, TransformedDataset};
use crate::partition::canonicalize;

/// Per platform, per column cluster sums of one subject's values.
fn subject_column_sums(data: &TransformedDataset, state: &ClusterState, i: usize, sums: &mut [Vec<f64>]) {
    for (t, platform) in data.platforms.iter().enumerate() {
        let s = &mut sums[t];
        s.clear();
        s.resize(state.k(t), 0.0);
        for (j, &z) in platform.patient(i).iter().enumerate() {
            s[state.columns[t][j]] += z;
        }
    }
}

fn row_log_lik(
    row: impl Fn(usize, usize) -> f64,
    sums: &[Vec<f64>],
    state: &ClusterState,
    inv_vars: &[f64],
) -> f64 {
    let mut total = 0.0;
    for (t, s) in sums.iter().enumerate() {
        let mut acc = 0.0;
        for (k, &sk) in s.iter().enumerate() {
            let p = row(t, k);
            acc += p * sk - 0.5 * state.column_sizes[t][k] as f64 * p * p;
        }
        total += acc * inv_vars[t];
    }
    total
}

/// Unnormalised log full-conditional weights of subject `i` for the existing
/// row clusters, with `i` removed from its own cluster's count.
pub fn existing_row_log_weights(
    state: &ClusterState,
    latents: &LatentMatrices,
    data: &TransformedDataset,
    i: usize,
) -> Vec<f64> {
    let mut sums = vec![Vec::new(); data.n_platforms()];
    subject_column_sums(data, state, i, &mut sums);
    let inv_vars: Vec<f64> = latents.noise_sd.iter().map(|s| 1.0 / (s * s)).collect();
    let own = state.rows[i];
    (0..state.h())
        .map(|h| {
            let size = state.row_sizes[h] - usize::from(h == own);
            if size == 0 {
                return f64::NEG_INFINITY;
            }
            (size as f64).ln() + row_log_lik(|t, k| latents.phi(t, h, k), &sums, state, &inv_vars)
        })
        .collect()
}

/// One sweep over all subjects. Labels are canonical on return.
pub fn update_row_allocations<R: Rng + ?Sized>(
    state: &mut ClusterState,
    latents: &mut LatentMatrices,
    store: &mut AtomStore,
    data: &TransformedDataset,
    alpha2: f64,
    n_aux: usize,
    rng: &mut R,
) {
    let n_aux = n_aux.max(1);
    let n_platforms = data.n_platforms();
    let inv_vars: Vec<f64> = latents.noise_sd.iter().map(|s| 1.0 / (s * s)).collect();
    let mut sums = vec![Vec::new(); n_platforms];
    let mut weights = Vec::new();

    for i in 0..data.n() {
        subject_column_sums(data, state, i, &mut sums);
        let old = state.rows[i];
        state.row_sizes[old] -= 1;
        // aux[a][t] is the latent row of auxiliary component a on platform t
        let mut aux: Vec<Vec<Vec<LatentCell>>> = Vec::with_capacity(n_aux);
        if state.row_sizes[old] == 0 {
            aux.push(latents.platforms.iter_mut().map(|m| m.remove_row(old)).collect());
            state.row_sizes.remove(old);
            for r in state.rows.iter_mut() {
                if *r > old {
                    *r -= 1;
                }
            }
        }
        while aux.len() < n_aux {
            aux.push(
                (0..n_platforms)
                    .map(|t| (0..state.k(t)).map(|_| store.seat_from_prior(t, rng)).collect())
                    .collect(),
            );
        }

        let h_now = state.h();
        weights.clear();
        for h in 0..h_now {
            weights.push(
                (state.row_sizes[h] as f64).ln()
                    + row_log_lik(|t, k| latents.phi(t, h, k), &sums, state, &inv_vars),
            );
        }
        let new_w = (alpha2 / n_aux as f64).ln();
        for row in &aux {
            weights.push(new_w + row_log_lik(|t, k| row[t][k].value, &sums, state, &inv_vars));
        }

        let pick = sample_log_weights(&weights, rng);
        let release = |store: &mut AtomStore, row: &Vec<Vec<LatentCell>>| {
            for (t, cells) in row.iter().enumerate().rev() {
                for cell in cells.iter().rev() {
                    store.unseat(t, cell);
                }
            }
        };
        if pick < h_now {
            state.rows[i] = pick;
            state.row_sizes[pick] += 1;
            for row in aux.iter().rev() {
                release(store, row);
            }
        } else {
            let chosen = pick - h_now;
            for (a, row) in aux.iter().enumerate().rev() {
                if a != chosen {
                    release(store, row);
                }
            }
            for (t, m) in latents.platforms.iter_mut().enumerate() {
                m.push_row(&aux[chosen][t]);
            }
            state.row_sizes.push(1);
            state.rows[i] = h_now;
        }
    }

    let (labels, order) = canonicalize(&state.rows);
    state.rows = labels;
    state.row_sizes = order.iter().map(|&h| state.row_sizes[h]).collect();
    for m in latents.platforms.iter_mut() {
        m.permute_rows(&order);
    }
}
