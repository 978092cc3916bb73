//! Oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use omics_bnp::mcmc::atoms::{update_latent_atoms, AtomStore, FixedAtoms};
use omics_bnp::mcmc::{columns, rows};
use omics_bnp::model::{block_stats, ClusterState, LatentMatrices, LatentMatrix, Matrix, TransformedDataset};
use omics_bnp::partition::{canonicalize, partition_log_prob};
use omics_bnp::rng;

/// All set partitions of `n` items as canonical label vectors.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let next = prefix.iter().max().map_or(0, |m| m + 1);
        for l in 0..=next {
            prefix.push(l);
            grow(prefix, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        grow(&mut Vec::new(), n, &mut out);
    }
    out
}

/// Cluster sizes of a canonical labeling.
pub fn sizes(labels: &[usize]) -> Vec<usize> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut s = vec![0; k];
    for &l in labels {
        s[l] += 1;
    }
    s
}

/// Sequential Chinese-restaurant product, coded independently of the library.
pub fn crp_sequential_log_prob(labels: &[usize], d: f64, alpha: f64) -> f64 {
    let mut counts: Vec<usize> = Vec::new();
    let mut logp = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        let denom = i as f64 + alpha;
        let num = if l < counts.len() {
            counts[l] as f64 - d
        } else {
            alpha + counts.len() as f64 * d
        };
        logp += (num / denom).ln();
        if l < counts.len() {
            counts[l] += 1;
        } else {
            counts.push(1);
        }
    }
    logp
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Largest change in partition log probability when the items of any
/// partition of at most `max_items` items are reordered.
pub fn exchangeability_max_error(max_items: usize, params: &[(f64, f64)]) -> f64 {
    let mut worst: f64 = 0.0;
    for n in 1..=max_items {
        let perms = permutations(n);
        for part in set_partitions(n) {
            for &(d, alpha) in params {
                let base = partition_log_prob(&part, d, alpha).unwrap();
                for perm in &perms {
                    let reordered: Vec<usize> = perm.iter().map(|&i| part[i]).collect();
                    let (canon, _) = canonicalize(&reordered);
                    worst = worst.max((partition_log_prob(&canon, d, alpha).unwrap() - base).abs());
                }
            }
        }
    }
    worst
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn normalize_log(xs: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(xs);
    xs.iter().map(|x| (x - z).exp()).collect()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn normal_log_pdf(z: f64, mean: f64, sd: f64) -> f64 {
    let r = (z - mean) / sd;
    -0.5 * r * r - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// A model small enough to enumerate: fixed atoms, fixed noise, and one of
/// the two allocation directions held fixed.
pub struct TinyModel {
    pub data: TransformedDataset,
    pub atoms: FixedAtoms,
    pub sigma: f64,
}

impl TinyModel {
    pub fn new(platforms: &[Vec<Vec<f64>>], values: Vec<f64>, weights: Vec<f64>, sigma: f64) -> Self {
        let matrices = platforms.iter().map(|rows| Matrix::from_rows(rows).unwrap()).collect();
        Self {
            data: TransformedDataset::from_matrices(matrices).unwrap(),
            atoms: FixedAtoms::new(values, weights).unwrap(),
            sigma,
        }
    }

    /// Log marginal of the data in one block with its latent value summed
    /// over the atoms.
    fn block_log_marginal(&self, cells: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .atoms
            .values
            .iter()
            .zip(&self.atoms.weights)
            .map(|(&v, &w)| w.ln() + cells.iter().map(|&z| normal_log_pdf(z, v, self.sigma)).sum::<f64>())
            .collect();
        log_sum_exp(&terms)
    }

    fn blocks_log_marginal(&self, state_rows: &[usize], state_cols: &[Vec<usize>]) -> f64 {
        let h = state_rows.iter().max().unwrap() + 1;
        let mut total = 0.0;
        for (t, p) in self.data.platforms.iter().enumerate() {
            let k = state_cols[t].iter().max().unwrap() + 1;
            let mut blocks = vec![Vec::new(); h * k];
            for i in 0..p.n() {
                for (j, &z) in p.patient(i).iter().enumerate() {
                    blocks[state_rows[i] * k + state_cols[t][j]].push(z);
                }
            }
            total += blocks.iter().map(|b| self.block_log_marginal(b)).sum::<f64>();
        }
        total
    }

    /// Exact posterior over the column partitions of platform 0 with rows
    /// fixed, in the order of [`set_partitions`].
    pub fn column_posterior(&self, rows: &[usize], d: f64, alpha1: f64) -> Vec<f64> {
        let p = self.data.platforms[0].p();
        let logp: Vec<f64> = set_partitions(p)
            .iter()
            .map(|c| crp_sequential_log_prob(c, d, alpha1) + self.blocks_log_marginal(rows, std::slice::from_ref(c)))
            .collect();
        normalize_log(&logp)
    }

    /// Exact posterior over row partitions with columns fixed.
    pub fn row_posterior(&self, cols: &[Vec<usize>], alpha2: f64) -> Vec<f64> {
        let logp: Vec<f64> = set_partitions(self.data.n())
            .iter()
            .map(|r| crp_sequential_log_prob(r, 0.0, alpha2) + self.blocks_log_marginal(r, cols))
            .collect();
        normalize_log(&logp)
    }

    fn start(&self, state: &ClusterState, seed: u64) -> (LatentMatrices, AtomStore, rng::Rng) {
        let mut rng = rng::stream(seed, 0);
        let mut store = AtomStore::Fixed(self.atoms.clone());
        let platforms = (0..self.data.n_platforms())
            .map(|t| {
                let cells = (0..state.h() * state.k(t)).map(|_| store.seat_from_prior(t, &mut rng)).collect();
                LatentMatrix::new(state.h(), state.k(t), cells).unwrap()
            })
            .collect();
        let latents = LatentMatrices {
            platforms,
            noise_sd: vec![self.sigma; self.data.n_platforms()],
        };
        (latents, store, rng)
    }

    /// Visit frequencies of platform 0's column partitions over `sweeps`
    /// column-plus-atom sweeps.
    pub fn column_chain(&self, rows: &[usize], d: f64, alpha1: f64, sweeps: usize, seed: u64) -> Vec<f64> {
        let p = self.data.platforms[0].p();
        let index = partition_index(p);
        let mut state = ClusterState::new(vec![vec![0; p]], rows.to_vec()).unwrap();
        let (mut latents, mut store, mut rng) = self.start(&state, seed);
        let mut counts = vec![0usize; index.len()];
        for _ in 0..sweeps {
            columns::update_column_allocations(
                &mut state,
                &mut latents,
                &mut store,
                &self.data,
                0,
                d,
                alpha1,
                3,
                &mut rng,
            );
            let stats = block_stats(&self.data, &state);
            update_latent_atoms(&mut latents, &mut store, &stats, &mut rng);
            counts[index[&state.columns[0]]] += 1;
        }
        counts.iter().map(|&c| c as f64 / sweeps as f64).collect()
    }

    /// Visit frequencies of row partitions over `sweeps` row-plus-atom sweeps.
    pub fn row_chain(&self, cols: &[Vec<usize>], alpha2: f64, sweeps: usize, seed: u64) -> Vec<f64> {
        let n = self.data.n();
        let index = partition_index(n);
        let mut state = ClusterState::new(cols.to_vec(), vec![0; n]).unwrap();
        let (mut latents, mut store, mut rng) = self.start(&state, seed);
        let mut counts = vec![0usize; index.len()];
        for _ in 0..sweeps {
            rows::update_row_allocations(&mut state, &mut latents, &mut store, &self.data, alpha2, 3, &mut rng);
            let stats = block_stats(&self.data, &state);
            update_latent_atoms(&mut latents, &mut store, &stats, &mut rng);
            counts[index[&state.rows]] += 1;
        }
        counts.iter().map(|&c| c as f64 / sweeps as f64).collect()
    }
}

fn partition_index(n: usize) -> HashMap<Vec<usize>, usize> {
    set_partitions(n).into_iter().enumerate().map(|(i, p)| (p, i)).collect()
}

/// Column-kernel oracle instance: two subjects in one row cluster, three
/// probes.
pub fn tiny_column_model() -> TinyModel {
    TinyModel::new(
        &[vec![vec![0.9, 1.2, -0.4], vec![0.3, 1.6, -0.9]]],
        vec![-1.0, 0.5, 1.5],
        vec![0.3, 0.4, 0.3],
        0.8,
    )
}

/// Row-kernel oracle instance: three subjects over two platforms of two and
/// one probes.
pub fn tiny_row_model() -> TinyModel {
    TinyModel::new(
        &[
            vec![vec![1.1, 0.2], vec![0.7, -0.5], vec![-0.8, -0.3]],
            vec![vec![1.4], vec![0.1], vec![-1.2]],
        ],
        vec![-1.0, 0.5, 1.5],
        vec![0.3, 0.4, 0.3],
        0.8,
    )
}
