//! Synthetic data with known clustering truth, clustering accuracy metrics
//! and a replication driver.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{run_stage1, McmcConfig};
use crate::model::{ClinicalOutcomes, ClusterState, Hyperparameters, Matrix, TransformedDataset};
use crate::partition::{sample_partition, stick_breaking};
use crate::rng;

/// Generator settings. One entry of `probes` and `discounts` per platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub n: usize,
    pub probes: Vec<usize>,
    pub discounts: Vec<f64>,
    pub alpha1: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub mu0: f64,
    pub tau0: f64,
    pub sigma: f64,
    /// Number of equiprobable row clusters.
    pub row_clusters: usize,
    /// Stick-breaking truncation level for the discrete measures.
    pub truncation: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n: 70,
            probes: vec![250, 250],
            discounts: vec![0.2, 0.25],
            alpha1: 10.0,
            alpha3: 10.0,
            alpha4: 10.0,
            mu0: 0.0,
            tau0: 1.0,
            sigma: 0.2,
            row_clusters: 3,
            truncation: 2000,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config("need at least two subjects".into()));
        }
        if self.probes.is_empty() || self.probes.len() != self.discounts.len() {
            return Err(Error::Config(
                "probes and discounts need one entry per platform".into(),
            ));
        }
        if self.probes.contains(&0) {
            return Err(Error::Config("every platform needs a probe".into()));
        }
        if self.discounts.iter().any(|d| !(0.0..1.0).contains(d)) {
            return Err(Error::Config("discounts must lie in [0, 1)".into()));
        }
        if [self.alpha1, self.alpha3, self.alpha4, self.tau0].iter().any(|a| a.is_nan() || *a <= 0.0) {
            return Err(Error::Config("masses and tau0 must be positive".into()));
        }
        if self.sigma.is_nan() || self.sigma < 0.0 || !self.mu0.is_finite() {
            return Err(Error::Config("sigma must be non-negative and mu0 finite".into()));
        }
        if self.row_clusters == 0 || self.truncation == 0 {
            return Err(Error::Config("row clusters and truncation must be positive".into()));
        }
        Ok(())
    }

    /// Model hyperparameters matching the generating masses and base measure.
    pub fn fit_hyperparameters(&self) -> Hyperparameters {
        Hyperparameters {
            alpha1: self.alpha1,
            alpha3: self.alpha3,
            alpha4: self.alpha4,
            mu0: self.mu0,
            tau0: self.tau0,
            ..Hyperparameters::default()
        }
    }
}

/// Generating allocations and latent values.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub rows: Vec<usize>,
    pub columns: Vec<Vec<usize>>,
    /// Latent matrix per platform, `row_clusters x K_t`.
    pub phi: Vec<Matrix>,
    pub sigma: f64,
    pub config: SimulationConfig,
}

/// Draw a dataset and its truth.
///
/// Noise enters as `sigma` times a standard normal draw, so two calls with the
/// same stream and different `sigma` share every other quantity.
pub fn generate_synthetic<R: Rng + ?Sized>(
    config: &SimulationConfig,
    rng: &mut R,
) -> Result<(TransformedDataset, SyntheticTruth)> {
    config.validate()?;
    let h = config.row_clusters;
    let rows: Vec<usize> = (0..config.n).map(|_| rng.random_range(0..h)).collect();
    let columns = config
        .probes
        .iter()
        .zip(&config.discounts)
        .map(|(&p, &d)| sample_partition(p, d, config.alpha1, rng))
        .collect::<Result<Vec<_>>>()?;
    let base = Normal::new(config.mu0, config.tau0).map_err(|e| Error::Config(e.to_string()))?;
    let g0 = stick_breaking(config.alpha4, |r: &mut R| base.sample(r), config.truncation, rng)?;
    let mut phi = Vec::with_capacity(columns.len());
    for c in &columns {
        let k = c.iter().max().map_or(0, |m| m + 1);
        let g1 = stick_breaking(config.alpha3, |r: &mut R| g0.sample(r), config.truncation, rng)?;
        let values = (0..h * k).map(|_| g1.sample(rng)).collect();
        phi.push(Matrix::new(h, k, values)?);
    }
    let mut matrices = Vec::with_capacity(columns.len());
    for (c, ph) in columns.iter().zip(&phi) {
        let mut values = Vec::with_capacity(config.n * c.len());
        for &r in &rows {
            for &k in c {
                let e: f64 = StandardNormal.sample(rng);
                values.push(ph.get(r, k) + config.sigma * e);
            }
        }
        matrices.push(Matrix::new(config.n, c.len(), values)?);
    }
    let data = TransformedDataset::from_matrices(matrices)?;
    Ok((
        data,
        SyntheticTruth {
            rows,
            columns,
            phi,
            sigma: config.sigma,
            config: config.clone(),
        },
    ))
}

/// Fraction of unordered item pairs on which two allocations agree about
/// co-membership.
pub fn pair_agreement(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!(
            "allocations have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Argument("need at least two items".into()));
    }
    let mut agree = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            agree += u64::from((a[i] == a[j]) == (b[i] == b[j]));
        }
    }
    Ok(agree as f64 / (n * (n - 1) / 2) as f64)
}

/// Probe-pair accuracy of an estimated column allocation.
pub fn column_accuracy(estimate: &[usize], truth: &[usize]) -> Result<f64> {
    pair_agreement(estimate, truth)
}

/// Subject-pair accuracy of an estimated row allocation.
pub fn row_accuracy(estimate: &[usize], truth: &[usize]) -> Result<f64> {
    pair_agreement(estimate, truth)
}

/// Fit quality of latent block means. `None` where the data are constant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitR2 {
    pub pooled: Option<f64>,
    pub per_platform: Vec<Option<f64>>,
}

/// `1 - SSE/SST` with per-platform grand means in SST, pooled and per
/// platform.
pub fn fit_r2(data: &TransformedDataset, state: &ClusterState, phi: &[Matrix]) -> Result<FitR2> {
    state.check_dims(data)?;
    if phi.len() != data.n_platforms() {
        return Err(Error::Structural(format!(
            "{} latent matrices for {} platforms",
            phi.len(),
            data.n_platforms()
        )));
    }
    let ratio = |sse: f64, sst: f64| (sst > 0.0).then(|| 1.0 - sse / sst);
    let mut per_platform = Vec::with_capacity(phi.len());
    let (mut sse_all, mut sst_all) = (0.0, 0.0);
    for (t, (p, ph)) in data.platforms.iter().zip(phi).enumerate() {
        if ph.rows() != state.h() || ph.cols() != state.k(t) {
            return Err(Error::Structural(format!(
                "latent matrix {t} is {}x{}, allocations need {}x{}",
                ph.rows(),
                ph.cols(),
                state.h(),
                state.k(t)
            )));
        }
        let z = p.values.as_slice();
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let (mut sse, mut sst) = (0.0, 0.0);
        for i in 0..p.n() {
            let r = state.rows[i];
            for (j, &c) in state.columns[t].iter().enumerate() {
                let v = p.values.get(i, j);
                sse += (v - ph.get(r, c)).powi(2);
                sst += (v - mean).powi(2);
            }
        }
        per_platform.push(ratio(sse, sst));
        sse_all += sse;
        sst_all += sst;
    }
    Ok(FitR2 {
        pooled: ratio(sse_all, sst_all),
        per_platform,
    })
}

/// Accuracy summary of one replicate, or the reason it failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateResult {
    pub setup_h: usize,
    pub setup_sigma: f64,
    pub replicate: usize,
    pub kappa: Vec<f64>,
    pub theta: f64,
    pub r2: Vec<Option<f64>>,
    pub seconds: f64,
    pub error: Option<String>,
}

/// One cell of a replication grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub row_clusters: usize,
    pub sigma: f64,
}

/// The twelve-cell grid over row cluster counts 3 to 5 and noise 0.2 to 0.5.
pub fn default_grid() -> Vec<GridCell> {
    let mut grid = Vec::new();
    for row_clusters in [3, 4, 5] {
        for sigma in [0.2, 0.3, 0.4, 0.5] {
            grid.push(GridCell { row_clusters, sigma });
        }
    }
    grid
}

fn replicate_streams(seed: u64, cell: GridCell, replicate: usize) -> (rng::Rng, u64) {
    // The data stream ignores the noise level so noise settings share draws.
    let key = ((cell.row_clusters as u64) << 32) | replicate as u64;
    let data = rng::stream(seed, rng::stream_id(rng::purpose::REPLICATE_DATA, key));
    let mut fit = rng::stream(seed, rng::stream_id(rng::purpose::REPLICATE_FIT, key));
    let fit_seed = fit.random::<u64>() ^ cell.sigma.to_bits();
    (data, fit_seed)
}

/// Generate and fit one replicate.
pub fn run_replicate(
    base: &SimulationConfig,
    fit: &McmcConfig,
    cell: GridCell,
    replicate: usize,
    seed: u64,
) -> ReplicateResult {
    let start = Instant::now();
    let mut out = ReplicateResult {
        setup_h: cell.row_clusters,
        setup_sigma: cell.sigma,
        replicate,
        kappa: Vec::new(),
        theta: f64::NAN,
        r2: Vec::new(),
        seconds: 0.0,
        error: None,
    };
    let run = || -> Result<(Vec<f64>, f64, Vec<Option<f64>>)> {
        let config = SimulationConfig {
            row_clusters: cell.row_clusters,
            sigma: cell.sigma,
            ..base.clone()
        };
        let (mut data_rng, fit_seed) = replicate_streams(seed, cell, replicate);
        let (data, truth) = generate_synthetic(&config, &mut data_rng)?;
        let result = run_stage1(&data, fit, fit_seed)?;
        let kappa = result
            .column_ls
            .iter()
            .zip(&truth.columns)
            .map(|(e, t)| column_accuracy(e, t))
            .collect::<Result<Vec<_>>>()?;
        let theta = row_accuracy(&result.row_ls, &truth.rows)?;
        let r2 = fit_r2(&data, result.state(), &result.phi_mean)?;
        Ok((kappa, theta, r2.per_platform))
    };
    match run() {
        Ok((kappa, theta, r2)) => {
            out.kappa = kappa;
            out.theta = theta;
            out.r2 = r2;
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out.seconds = start.elapsed().as_secs_f64();
    out
}

/// Fit every grid cell `replicates` times in parallel. Failures are recorded
/// in the rows rather than aborting the study. Rows come back ordered by
/// cell, then replicate.
pub fn run_replication_study(
    base: &SimulationConfig,
    fit: &McmcConfig,
    grid: &[GridCell],
    replicates: usize,
    seed: u64,
) -> Result<Vec<ReplicateResult>> {
    if grid.is_empty() {
        return Err(Error::Argument("replication grid is empty".into()));
    }
    base.validate()?;
    fit.validate()?;
    let jobs: Vec<(GridCell, usize)> = grid
        .iter()
        .flat_map(|&c| (0..replicates).map(move |r| (c, r)))
        .collect();
    Ok(jobs
        .into_par_iter()
        .map(|(cell, r)| run_replicate(base, fit, cell, r, seed))
        .collect())
}

/// Mean and sample standard deviation of a metric over successful replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

impl MeanSd {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        let count = v.len();
        let mean = v.iter().sum::<f64>() / count as f64;
        let sd = if count > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, sd, count }
    }
}

/// Per-cell summary of a replication study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub setup_h: usize,
    pub setup_sigma: f64,
    pub kappa: Vec<MeanSd>,
    pub theta: MeanSd,
    pub r2: Vec<MeanSd>,
    pub failures: usize,
}

pub fn summarize(results: &[ReplicateResult]) -> Vec<CellSummary> {
    let mut cells: Vec<(usize, f64)> = Vec::new();
    for r in results {
        if !cells.contains(&(r.setup_h, r.setup_sigma)) {
            cells.push((r.setup_h, r.setup_sigma));
        }
    }
    cells
        .into_iter()
        .map(|(h, s)| {
            let rs: Vec<&ReplicateResult> = results
                .iter()
                .filter(|r| r.setup_h == h && r.setup_sigma == s)
                .collect();
            let ok: Vec<&&ReplicateResult> = rs.iter().filter(|r| r.error.is_none()).collect();
            let t = ok.iter().map(|r| r.kappa.len()).max().unwrap_or(0);
            CellSummary {
                setup_h: h,
                setup_sigma: s,
                kappa: (0..t).map(|i| MeanSd::of(ok.iter().map(|r| r.kappa[i]))).collect(),
                theta: MeanSd::of(ok.iter().map(|r| r.theta)),
                r2: (0..t)
                    .map(|i| MeanSd::of(ok.iter().map(|r| r.r2[i].unwrap_or(f64::NAN))))
                    .collect(),
                failures: rs.len() - ok.len(),
            }
        })
        .collect()
}

/// Settings for survival outcomes driven by a handful of probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurvivalConfig {
    pub predictors: usize,
    /// Largest allowed absolute correlation between chosen probes.
    pub max_correlation: f64,
    pub censored_fraction: f64,
}

impl Default for SurvivalConfig {
    fn default() -> Self {
        Self {
            predictors: 20,
            max_correlation: 0.5,
            censored_fraction: 0.2,
        }
    }
}

/// Outcomes and the probes (platform, column) that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalTruth {
    pub outcomes: ClinicalOutcomes,
    pub predictors: Vec<(usize, usize)>,
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Exponential survival times with mean `exp(sum of chosen probes)`; a random
/// subset of subjects is censored at a time drawn from the same law below
/// their event time.
pub fn generate_survival<R: Rng + ?Sized>(
    data: &TransformedDataset,
    config: &SurvivalConfig,
    rng: &mut R,
) -> Result<SurvivalTruth> {
    if !(0.0..1.0).contains(&config.censored_fraction) {
        return Err(Error::Config("censored fraction must lie in [0, 1)".into()));
    }
    let mut candidates: Vec<(usize, usize)> = data
        .platforms
        .iter()
        .enumerate()
        .flat_map(|(t, p)| (0..p.p()).map(move |j| (t, j)))
        .collect();
    // random order, then greedy acceptance under the correlation cap
    for i in (1..candidates.len()).rev() {
        candidates.swap(i, rng.random_range(0..=i));
    }
    let mut chosen: Vec<(usize, usize)> = Vec::with_capacity(config.predictors);
    for (t, j) in candidates {
        if chosen.len() == config.predictors {
            break;
        }
        let x = data.platforms[t].probe(j);
        let ok = chosen
            .iter()
            .all(|&(u, k)| correlation(x, data.platforms[u].probe(k)).abs() < config.max_correlation);
        if ok {
            chosen.push((t, j));
        }
    }
    if chosen.len() < config.predictors {
        return Err(Error::Argument(format!(
            "only {} probes satisfy the correlation cap",
            chosen.len()
        )));
    }
    let n = data.n();
    let n_censored = (config.censored_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut censored = vec![false; n];
    for &i in &order[..n_censored] {
        censored[i] = true;
    }
    let mut time = Vec::with_capacity(n);
    for (i, &is_censored) in censored.iter().enumerate() {
        let eta: f64 = chosen.iter().map(|&(t, j)| data.platforms[t].values.get(i, j)).sum();
        let rate = (-eta).exp();
        let event = Exp::new(rate).map_err(|e| Error::Argument(e.to_string()))?.sample(rng);
        let w = if is_censored {
            // inverse CDF of the exponential truncated to (0, event)
            let u: f64 = rng.random();
            let c = -(1.0 - u * -(-rate * event).exp_m1()).ln() / rate;
            c.max(f64::MIN_POSITIVE)
        } else {
            event
        };
        time.push(w);
    }
    let events = censored.iter().map(|c| !c).collect();
    Ok(SurvivalTruth {
        outcomes: ClinicalOutcomes::new(time, events)?,
        predictors: chosen,
    })
}
