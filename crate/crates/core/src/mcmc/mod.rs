//! Stage-1 posterior sampling: bidirectional clustering and latent matrices.
//!
//! Stage 1a runs unrestricted sweeps and summarises the probe allocations by
//! their least-squares allocation. Stage 1b fixes those column allocations and
//! summarises the subject allocations the same way. Stage 1c fixes both and
//! averages the latent matrices.

pub mod atoms;
pub mod columns;
pub mod density;
pub mod discount;
pub mod init;
pub mod noise;
pub mod rows;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{least_squares_allocation_blockwise, DEFAULT_MEMORY_BUDGET};
use crate::model::{
    block_stats, AtomId, ClusterState, Hyperparameters, LatentMatrices, Matrix, TransformedDataset,
};
use crate::rng;

pub use atoms::AtomStore;
pub use init::{init_state, InitConfig, LinkageDistance, LinkageInit};

/// Chain lengths, burn-in and thinning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    pub stage1a: usize,
    pub stage1b: usize,
    pub stage1c: usize,
    /// Fraction of each stage discarded before recording.
    pub burn_in: f64,
    pub thin: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            stage1a: 2000,
            stage1b: 1000,
            stage1c: 1000,
            burn_in: 0.5,
            thin: 2,
        }
    }
}

impl Schedule {
    pub fn burn_in_sweeps(&self, sweeps: usize) -> usize {
        ((sweeps as f64) * self.burn_in).floor() as usize
    }

    fn records(&self, sweeps: usize, sweep: usize) -> bool {
        let burn = self.burn_in_sweeps(sweeps);
        sweep >= burn && (sweep - burn) % self.thin.max(1) == self.thin.max(1) - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub hyper: Hyperparameters,
    pub schedule: Schedule,
    /// Auxiliary components per site for opening new clusters.
    pub aux_components: usize,
    pub init: InitConfig,
    pub sample_discount: bool,
    pub per_platform_sigma: bool,
    /// Validate allocation and atom bookkeeping after every kernel.
    pub check_invariants: bool,
    /// Memory budget in bytes for least-squares allocation search.
    pub memory_budget: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            hyper: Hyperparameters::default(),
            schedule: Schedule::default(),
            aux_components: 3,
            init: InitConfig::default(),
            sample_discount: true,
            per_platform_sigma: false,
            check_invariants: cfg!(debug_assertions),
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        let s = &self.schedule;
        if s.stage1a == 0 || s.stage1b == 0 || s.stage1c == 0 || s.thin == 0 {
            return Err(Error::Config("chain lengths and thinning must be positive".into()));
        }
        if !(0.0..1.0).contains(&s.burn_in) {
            return Err(Error::Config("burn-in fraction must lie in [0, 1)".into()));
        }
        for n in [s.stage1a, s.stage1b, s.stage1c] {
            if n - s.burn_in_sweeps(n) < s.thin {
                return Err(Error::Config(format!(
                    "a stage of {n} sweeps records nothing after burn-in"
                )));
            }
        }
        if self.aux_components == 0 {
            return Err(Error::Config("need at least one auxiliary component".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "1a")]
    S1a,
    #[serde(rename = "1b")]
    S1b,
    #[serde(rename = "1c")]
    S1c,
    #[serde(rename = "2")]
    S2,
}

impl Stage {
    pub fn tag(self) -> &'static str {
        match self {
            Stage::S1a => "1a",
            Stage::S1b => "1b",
            Stage::S1c => "1c",
            Stage::S2 => "2",
        }
    }
}

/// One recorded sweep. Fields a stage does not vary are left empty.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub sweep: usize,
    pub columns: Option<Vec<Vec<usize>>>,
    pub rows: Option<Vec<usize>>,
    pub phi: Option<Vec<Matrix>>,
    pub atom_ids: Option<Vec<Vec<AtomId>>>,
    pub sigma: Vec<f64>,
    pub discount: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub stage: Stage,
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub samples: Vec<TraceSample>,
}

/// Per-sweep chain summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticRecord {
    pub stage: Stage,
    pub sweep: usize,
    pub column_clusters: Vec<usize>,
    pub row_clusters: usize,
    pub sigma: Vec<f64>,
    pub discount: Vec<f64>,
    /// Running acceptance rate of discount moves per platform.
    pub discount_acceptance: Vec<f64>,
    pub atoms: usize,
    pub log_posterior: f64,
}

/// Mutable chain state.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub state: ClusterState,
    pub latents: LatentMatrices,
    pub store: AtomStore,
    pub discounts: Vec<f64>,
    discount_moves: Vec<(usize, usize)>,
}

impl ChainState {
    pub fn new(state: ClusterState, latents: LatentMatrices, store: AtomStore, discounts: Vec<f64>) -> Self {
        let t = discounts.len();
        Self {
            state,
            latents,
            store,
            discounts,
            discount_moves: vec![(0, 0); t],
        }
    }

    pub fn validate(&self, data: &TransformedDataset) -> Result<()> {
        self.state.check_dims(data)?;
        self.state.validate()?;
        for c in &self.state.columns {
            if !crate::partition::is_canonical(c) {
                return Err(Error::Structural("column labels lost canonical order".into()));
            }
        }
        if !crate::partition::is_canonical(&self.state.rows) {
            return Err(Error::Structural("row labels lost canonical order".into()));
        }
        self.latents.check_dims(&self.state)?;
        self.store.validate(&self.latents)
    }

    pub fn log_posterior(&self, data: &TransformedDataset, config: &McmcConfig) -> f64 {
        density::joint_log_density(
            data,
            &self.state,
            &self.latents,
            &self.store,
            &config.hyper,
            &self.discounts,
            config.per_platform_sigma,
        )
    }

    fn acceptance(&self) -> Vec<f64> {
        self.discount_moves
            .iter()
            .map(|&(a, n)| if n == 0 { 0.0 } else { a as f64 / n as f64 })
            .collect()
    }
}

/// Which blocks a sweep updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepPlan {
    pub columns: bool,
    pub rows: bool,
    pub discounts: bool,
}

/// One full sweep of the requested kernels, always followed by latent atom
/// and noise updates.
pub fn sweep<R: Rng + ?Sized>(
    chain: &mut ChainState,
    data: &TransformedDataset,
    config: &McmcConfig,
    plan: SweepPlan,
    rng: &mut R,
) -> Result<()> {
    let hyper = &config.hyper;
    let check = |chain: &ChainState| -> Result<()> {
        if config.check_invariants {
            chain.validate(data)?;
        }
        Ok(())
    };
    if plan.columns {
        for t in 0..data.n_platforms() {
            columns::update_column_allocations(
                &mut chain.state,
                &mut chain.latents,
                &mut chain.store,
                data,
                t,
                chain.discounts[t],
                hyper.alpha1,
                config.aux_components,
                rng,
            );
            check(chain)?;
        }
    }
    if plan.rows {
        rows::update_row_allocations(
            &mut chain.state,
            &mut chain.latents,
            &mut chain.store,
            data,
            hyper.alpha2,
            config.aux_components,
            rng,
        );
        check(chain)?;
    }
    let stats = block_stats(data, &chain.state);
    atoms::update_latent_atoms(&mut chain.latents, &mut chain.store, &stats, rng);
    check(chain)?;
    noise::update_sigma(
        &mut chain.latents,
        &stats,
        &hyper.sigma_prior,
        config.per_platform_sigma,
        rng,
    );
    if plan.discounts && config.sample_discount {
        for t in 0..data.n_platforms() {
            let (d, accepted) = discount::update_discount(
                &chain.state.column_sizes[t],
                chain.discounts[t],
                hyper.alpha1,
                &hyper.discount_prior,
                rng,
            );
            chain.discounts[t] = d;
            chain.discount_moves[t].0 += usize::from(accepted);
            chain.discount_moves[t].1 += 1;
        }
    }
    Ok(())
}

/// Everything Stage 1 produces.
#[derive(Debug, Clone)]
pub struct Stage1Result {
    pub trace_a: ChainTrace,
    pub column_ls: Vec<Vec<usize>>,
    pub column_ls_loss: Vec<f64>,
    pub trace_b: ChainTrace,
    pub row_ls: Vec<usize>,
    pub row_ls_loss: f64,
    pub trace_c: ChainTrace,
    /// Posterior mean latent matrix per platform for the final allocations.
    pub phi_mean: Vec<Matrix>,
    /// Posterior median noise sd per platform.
    pub sigma: Vec<f64>,
    /// Final chain state (least-squares allocations with the last latent draw).
    pub final_chain: ChainState,
    pub diagnostics: Vec<DiagnosticRecord>,
}

impl Stage1Result {
    pub fn state(&self) -> &ClusterState {
        &self.final_chain.state
    }
}

fn record(
    chain: &ChainState,
    stage: Stage,
    sweep: usize,
    data: &TransformedDataset,
    config: &McmcConfig,
) -> DiagnosticRecord {
    DiagnosticRecord {
        stage,
        sweep,
        column_clusters: (0..data.n_platforms()).map(|t| chain.state.k(t)).collect(),
        row_clusters: chain.state.h(),
        sigma: chain.latents.noise_sd.clone(),
        discount: chain.discounts.clone(),
        discount_acceptance: chain.acceptance(),
        atoms: chain.store.n_atoms(),
        log_posterior: chain.log_posterior(data, config),
    }
}

/// Replace the allocations of a chain and reseat its latent matrices from
/// block means, keeping the current noise scale and discounts.
fn restart_with<R: Rng + ?Sized>(
    chain: &ChainState,
    state: ClusterState,
    data: &TransformedDataset,
    config: &McmcConfig,
    rng: &mut R,
) -> ChainState {
    let mut store = init::empty_store(&config.hyper, data.n_platforms());
    let mut latents = init::seat_latents(data, &state, &mut store, config.per_platform_sigma, rng);
    latents.noise_sd = chain.latents.noise_sd.clone();
    let mut next = ChainState::new(state, latents, store, chain.discounts.clone());
    next.discount_moves = chain.discount_moves.clone();
    next
}

#[allow(clippy::too_many_arguments)]
fn run_stage<R: Rng + ?Sized>(
    chain: &mut ChainState,
    data: &TransformedDataset,
    config: &McmcConfig,
    stage: Stage,
    sweeps: usize,
    plan: SweepPlan,
    seed: u64,
    diagnostics: &mut Vec<DiagnosticRecord>,
    rng: &mut R,
) -> Result<ChainTrace> {
    let s = &config.schedule;
    let mut samples = Vec::new();
    for it in 0..sweeps {
        sweep(chain, data, config, plan, rng)?;
        diagnostics.push(record(chain, stage, it, data, config));
        if s.records(sweeps, it) {
            let (columns, rows, phi, atom_ids) = match stage {
                Stage::S1a => (Some(chain.state.columns.clone()), Some(chain.state.rows.clone()), None, None),
                Stage::S1b => (None, Some(chain.state.rows.clone()), None, None),
                _ => (
                    None,
                    None,
                    Some(chain.latents.platforms.iter().map(|m| m.values()).collect()),
                    Some(chain.latents.platforms.iter().map(|m| m.atom_ids()).collect()),
                ),
            };
            samples.push(TraceSample {
                sweep: it,
                columns,
                rows,
                phi,
                atom_ids,
                sigma: chain.latents.noise_sd.clone(),
                discount: chain.discounts.clone(),
            });
        }
    }
    Ok(ChainTrace {
        stage,
        sweeps,
        burn_in: s.burn_in_sweeps(sweeps),
        thin: s.thin,
        seed,
        samples,
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Run Stages 1a, 1b and 1c from a seed.
pub fn run_stage1(data: &TransformedDataset, config: &McmcConfig, seed: u64) -> Result<Stage1Result> {
    config.validate()?;
    let mut rng = rng::stream(seed, rng::stream_id(rng::purpose::STAGE1, 0));
    let (state, latents, store) = init_state(
        data,
        &config.hyper,
        &config.init,
        config.per_platform_sigma,
        &mut rng,
    )?;
    let discounts = (0..data.n_platforms()).map(|t| config.hyper.discount_for(t)).collect();
    let mut chain = ChainState::new(state, latents, store, discounts);
    if config.check_invariants {
        chain.validate(data)?;
    }
    let mut diagnostics = Vec::new();
    let sched = &config.schedule;

    // 1a: unrestricted
    let plan_a = SweepPlan {
        columns: true,
        rows: true,
        discounts: true,
    };
    let trace_a = run_stage(&mut chain, data, config, Stage::S1a, sched.stage1a, plan_a, seed, &mut diagnostics, &mut rng)?;
    let mut column_ls = Vec::with_capacity(data.n_platforms());
    let mut column_ls_loss = Vec::with_capacity(data.n_platforms());
    for t in 0..data.n_platforms() {
        let samples: Vec<&[usize]> = trace_a
            .samples
            .iter()
            .map(|s| s.columns.as_ref().expect("1a records columns")[t].as_slice())
            .collect();
        let ls = least_squares_allocation_blockwise(&samples, config.memory_budget)?;
        column_ls.push(ls.allocation);
        column_ls_loss.push(ls.loss);
    }

    // 1b: columns fixed at their least-squares allocation
    let state_b = ClusterState::new(column_ls.clone(), chain.state.rows.clone())?;
    chain = restart_with(&chain, state_b, data, config, &mut rng);
    let plan_b = SweepPlan {
        columns: false,
        rows: true,
        discounts: false,
    };
    let trace_b = run_stage(&mut chain, data, config, Stage::S1b, sched.stage1b, plan_b, seed, &mut diagnostics, &mut rng)?;
    let row_samples: Vec<&[usize]> = trace_b
        .samples
        .iter()
        .map(|s| s.rows.as_deref().expect("1b records rows"))
        .collect();
    let row_fit = least_squares_allocation_blockwise(&row_samples, config.memory_budget)?;

    // 1c: both allocations fixed
    let state_c = ClusterState::new(column_ls.clone(), row_fit.allocation.clone())?;
    chain = restart_with(&chain, state_c, data, config, &mut rng);
    let plan_c = SweepPlan {
        columns: false,
        rows: false,
        discounts: false,
    };
    let trace_c = run_stage(&mut chain, data, config, Stage::S1c, sched.stage1c, plan_c, seed, &mut diagnostics, &mut rng)?;

    let m = trace_c.samples.len() as f64;
    let mut phi_mean: Vec<Matrix> = chain
        .latents
        .platforms
        .iter()
        .map(|p| Matrix::zeros(p.rows(), p.cols()))
        .collect();
    for s in &trace_c.samples {
        for (acc, phi) in phi_mean.iter_mut().zip(s.phi.as_ref().expect("1c records phi")) {
            for h in 0..acc.rows() {
                for k in 0..acc.cols() {
                    acc.set(h, k, acc.get(h, k) + phi.get(h, k) / m);
                }
            }
        }
    }
    let sigma = (0..data.n_platforms())
        .map(|t| median(trace_c.samples.iter().map(|s| s.sigma[t]).collect()))
        .collect();

    Ok(Stage1Result {
        trace_a,
        column_ls,
        column_ls_loss,
        trace_b,
        row_ls: row_fit.allocation,
        row_ls_loss: row_fit.loss,
        trace_c,
        phi_mean,
        sigma,
        final_chain: chain,
        diagnostics,
    })
}
