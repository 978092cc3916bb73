//! Poisson-Dirichlet (Pitman-Yor) and Dirichlet process partition machinery.
//!
//! Partitions are always represented in canonical form: zero-based labels in
//! order of first appearance.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::model::DiscountPrior;

/// Sizes of the currently occupied clusters.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PartitionCounts {
    sizes: Vec<usize>,
    total: usize,
}

impl PartitionCounts {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.contains(&0) {
            return Err(Error::Argument("cluster sizes must be positive".into()));
        }
        let total = sizes.iter().sum();
        Ok(Self { sizes, total })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn n_clusters(&self) -> usize {
        self.sizes.len()
    }

    fn add(&mut self, label: usize) {
        if label == self.sizes.len() {
            self.sizes.push(1);
        } else {
            self.sizes[label] += 1;
        }
        self.total += 1;
    }
}

fn check_params(d: f64, alpha: f64, k: usize) -> Result<()> {
    if !(0.0..1.0).contains(&d) {
        return Err(Error::Argument(format!("discount must lie in [0, 1), got {d}")));
    }
    if !alpha.is_finite() || alpha + k as f64 * d <= 0.0 {
        return Err(Error::Argument(format!(
            "mass {alpha} with discount {d} is invalid for {k} clusters"
        )));
    }
    Ok(())
}

/// Predictive probabilities of the next item joining each existing cluster
/// (entries `0..K`) or opening a new one (entry `K`).
pub fn pdp_predictive(counts: &PartitionCounts, d: f64, alpha: f64) -> Result<Vec<f64>> {
    let k = counts.n_clusters();
    check_params(d, alpha, k)?;
    let denom = counts.total() as f64 + alpha;
    let mut probs: Vec<f64> = counts.sizes().iter().map(|&n| (n as f64 - d) / denom).collect();
    probs.push((alpha + k as f64 * d) / denom);
    Ok(probs)
}

/// Draw a canonical partition of `p` items by sequential predictive draws.
pub fn sample_partition<R: Rng + ?Sized>(
    p: usize,
    d: f64,
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if p == 0 {
        return Err(Error::Argument("need at least one item".into()));
    }
    check_params(d, alpha, 0)?;
    let mut counts = PartitionCounts::default();
    let mut labels = Vec::with_capacity(p);
    for _ in 0..p {
        let k = counts.n_clusters();
        let denom = counts.total() as f64 + alpha;
        let mut u = rng.random::<f64>() * denom;
        let mut label = k;
        for (l, &n) in counts.sizes().iter().enumerate() {
            u -= n as f64 - d;
            if u < 0.0 {
                label = l;
                break;
            }
        }
        counts.add(label);
        labels.push(label);
    }
    Ok(labels)
}

/// True when labels are zero-based in order of first appearance.
pub fn is_canonical(labels: &[usize]) -> bool {
    let mut next = 0;
    for &l in labels {
        if l == next {
            next += 1;
        } else if l > next {
            return false;
        }
    }
    true
}

/// Relabel into canonical form. Returns the new labels and `order`, where
/// `order[new] = old`.
pub fn canonicalize(labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let max = labels.iter().max().map_or(0, |&m| m + 1);
    let mut map = vec![usize::MAX; max];
    let mut order = Vec::new();
    let out = labels
        .iter()
        .map(|&l| {
            if map[l] == usize::MAX {
                map[l] = order.len();
                order.push(l);
            }
            map[l]
        })
        .collect();
    (out, order)
}

/// Log probability of a canonical allocation as the product of sequential
/// predictive probabilities.
pub fn partition_log_prob(alloc: &[usize], d: f64, alpha: f64) -> Result<f64> {
    if !is_canonical(alloc) {
        return Err(Error::Structural(
            "allocation is not labeled in order of first appearance".into(),
        ));
    }
    check_params(d, alpha, 0)?;
    let mut counts = PartitionCounts::default();
    let mut logp = 0.0;
    for &label in alloc {
        let k = counts.n_clusters();
        let denom = counts.total() as f64 + alpha;
        let num = if label == k {
            alpha + k as f64 * d
        } else {
            counts.sizes()[label] as f64 - d
        };
        logp += (num / denom).ln();
        counts.add(label);
    }
    Ok(logp)
}

/// Exchangeable partition probability from cluster sizes alone. Agrees with
/// [`partition_log_prob`] for any allocation inducing these sizes.
pub fn log_eppf(sizes: &[usize], d: f64, alpha: f64) -> f64 {
    let total: usize = sizes.iter().sum();
    let k = sizes.len();
    let mut logp = 0.0;
    for i in 1..k {
        logp += (alpha + i as f64 * d).ln();
    }
    for &n in sizes {
        for j in 1..n {
            logp += (j as f64 - d).ln();
        }
    }
    for i in 1..total {
        logp -= (alpha + i as f64).ln();
    }
    logp
}

/// Finite discrete probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    pub atoms: Vec<f64>,
    pub weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() || atoms.is_empty() {
            return Err(Error::Argument("atoms and weights must be nonempty and of equal length".into()));
        }
        if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::Argument("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::Argument(format!("weights sum to {total}, not 1")));
        }
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self {
            atoms,
            weights,
            cumulative,
        })
    }

    /// Index of an atom drawn according to the weights.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.atoms.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.atoms[self.sample_index(rng)]
    }
}

/// Truncated stick-breaking draw from `DP(alpha, base)`. The last weight
/// absorbs the unbroken remainder so the weights sum to one.
pub fn stick_breaking<R, F>(
    alpha: f64,
    mut base_sampler: F,
    truncation: usize,
    rng: &mut R,
) -> Result<DiscreteMeasure>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> f64,
{
    if truncation == 0 {
        return Err(Error::Argument("truncation must be at least 1".into()));
    }
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::Argument(format!("mass must be positive, got {alpha}")));
    }
    let beta = Beta::new(1.0, alpha).map_err(|e| Error::Argument(e.to_string()))?;
    let mut weights = Vec::with_capacity(truncation);
    let mut remaining = 1.0;
    for _ in 0..truncation - 1 {
        let v: f64 = beta.sample(rng);
        weights.push(remaining * v);
        remaining *= 1.0 - v;
    }
    weights.push(remaining);
    let atoms = (0..truncation).map(|_| base_sampler(rng)).collect();
    // Summation order can leave the total a few ulps from one.
    let total: f64 = weights.iter().sum();
    if let Some(last) = weights.last_mut() {
        *last += 1.0 - total;
        if *last < 0.0 {
            *last = 0.0;
        }
    }
    DiscreteMeasure::new(atoms, weights)
}

/// Draw a discount from the point-mass-at-zero / uniform mixture prior.
pub fn sample_discount<R: Rng + ?Sized>(prior: &DiscountPrior, rng: &mut R) -> f64 {
    if rng.random::<f64>() < prior.zero_mass {
        0.0
    } else {
        rng.random::<f64>()
    }
}
