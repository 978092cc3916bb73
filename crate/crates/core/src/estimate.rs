//! Posterior pairwise co-clustering probabilities and least-squares
//! allocation point estimates.
//!
//! The least-squares allocation is the recorded sample whose co-clustering
//! indicator matrix is closest, in squared error over item pairs, to the
//! posterior co-clustering probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Probe,
    Subject,
}

/// Symmetric matrix of co-clustering frequencies with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CoclusteringMatrix {
    n: usize,
    probs: Vec<f64>,
    pub item_kind: ItemKind,
}

impl CoclusteringMatrix {
    pub fn n_items(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.probs[a * self.n + b]
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.probs[a * self.n..(a + 1) * self.n]
    }
}

fn check_samples<S: AsRef<[usize]>>(samples: &[S]) -> Result<usize> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Argument("no samples to summarise".into()))?;
    let n = first.as_ref().len();
    if samples.iter().any(|s| s.as_ref().len() != n) {
        return Err(Error::Argument("samples have different lengths".into()));
    }
    Ok(n)
}

/// Fraction of samples in which each pair of items shares a cluster.
pub fn pairwise_coclustering<S: AsRef<[usize]>>(samples: &[S], item_kind: ItemKind) -> Result<CoclusteringMatrix> {
    let n = check_samples(samples)?;
    let mut counts = vec![0u32; n * n];
    for s in samples {
        let s = s.as_ref();
        for a in 0..n {
            for b in a + 1..n {
                if s[a] == s[b] {
                    counts[a * n + b] += 1;
                }
            }
        }
    }
    let m = samples.len() as f64;
    let mut probs = vec![0.0; n * n];
    for a in 0..n {
        probs[a * n + a] = 1.0;
        for b in a + 1..n {
            let v = counts[a * n + b] as f64 / m;
            probs[a * n + b] = v;
            probs[b * n + a] = v;
        }
    }
    Ok(CoclusteringMatrix { n, probs, item_kind })
}

/// Squared loss of one allocation against co-clustering probabilities.
pub fn allocation_loss(alloc: &[usize], pi_hat: &CoclusteringMatrix) -> f64 {
    let n = alloc.len();
    let mut loss = 0.0;
    for a in 0..n {
        let row = pi_hat.row(a);
        for b in a + 1..n {
            let same = if alloc[a] == alloc[b] { 1.0 } else { 0.0 };
            let r = same - row[b];
            loss += r * r;
        }
    }
    loss
}

/// Chosen sample and its loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresAllocation {
    pub index: usize,
    pub allocation: Vec<usize>,
    pub loss: f64,
}

/// Losses closer than this, relative to their size, count as tied. Equal
/// losses summed over different pairs can differ in the last bits.
const TIE_TOLERANCE: f64 = 1e-12;

fn improves(loss: f64, best: f64) -> bool {
    loss < best - TIE_TOLERANCE * best.abs().max(1.0)
}

/// Sample minimising the squared loss; ties go to the earliest sample.
pub fn least_squares_allocation<S: AsRef<[usize]>>(
    samples: &[S],
    pi_hat: &CoclusteringMatrix,
) -> Result<LeastSquaresAllocation> {
    let n = check_samples(samples)?;
    if n != pi_hat.n_items() {
        return Err(Error::Argument(format!(
            "samples have {n} items, co-clustering matrix has {}",
            pi_hat.n_items()
        )));
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in samples.iter().enumerate() {
        let loss = allocation_loss(s.as_ref(), pi_hat);
        if best.is_none_or(|(_, l)| improves(loss, l)) {
            best = Some((i, loss));
        }
    }
    let (index, loss) = best.expect("nonempty");
    Ok(LeastSquaresAllocation {
        index,
        allocation: samples[index].as_ref().to_vec(),
        loss,
    })
}

/// Default memory budget for blockwise evaluation, in bytes.
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 30;

/// Same estimator as [`least_squares_allocation`] without materialising the
/// full co-clustering matrix: rows of it are built in blocks that fit in
/// `memory_budget` bytes.
pub fn least_squares_allocation_blockwise<S: AsRef<[usize]>>(
    samples: &[S],
    memory_budget: usize,
) -> Result<LeastSquaresAllocation> {
    let n = check_samples(samples)?;
    let m = samples.len();
    let block = (memory_budget / (8 * n.max(1))).clamp(1, n.max(1));
    let mut losses = vec![0.0; m];
    let mut pi = vec![0.0; block * n];
    let mut start = 0;
    while start < n {
        let end = (start + block).min(n);
        pi.iter_mut().for_each(|v| *v = 0.0);
        for s in samples {
            let s = s.as_ref();
            for a in start..end {
                let row = &mut pi[(a - start) * n..(a - start + 1) * n];
                for b in a + 1..n {
                    if s[a] == s[b] {
                        row[b] += 1.0;
                    }
                }
            }
        }
        let scale = 1.0 / m as f64;
        pi.iter_mut().for_each(|v| *v *= scale);
        for (c, s) in samples.iter().enumerate() {
            let s = s.as_ref();
            let mut loss = 0.0;
            for a in start..end {
                let row = &pi[(a - start) * n..(a - start + 1) * n];
                for b in a + 1..n {
                    let same = if s[a] == s[b] { 1.0 } else { 0.0 };
                    let r = same - row[b];
                    loss += r * r;
                }
            }
            losses[c] += loss;
        }
        start = end;
    }
    let mut index = 0;
    for (c, &l) in losses.iter().enumerate() {
        if improves(l, losses[index]) {
            index = c;
        }
    }
    Ok(LeastSquaresAllocation {
        index,
        allocation: samples[index].as_ref().to_vec(),
        loss: losses[index],
    })
}
