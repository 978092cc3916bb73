//! Outcome-driven selection of merged column clusters: spike-and-slab
//! additive accelerated-failure-time regression on elected cluster
//! representatives, with Bayesian FDR calls.

pub mod augment;
pub mod design;
pub mod fdr;
pub mod gprior;
pub mod merge;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Dirichlet, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::atoms::sample_log_weights;
use crate::model::{InverseGammaPrior, TransformedDataset};
use crate::rng;

pub use design::{build_design, design_columns, Role, SplineConfig};
pub use fdr::{fdr_select, inclusion_probs, FdrSelection};
pub use merge::{merge_clusters, MergedCluster, MergedClusters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub sweeps: usize,
    pub burn_in: f64,
    pub thin: usize,
    pub spline: SplineConfig,
    /// g-prior scale; the number of subjects when unset.
    pub g: Option<f64>,
    pub tau_prior: InverseGammaPrior,
    /// Nominal Bayesian FDR level.
    pub fdr_level: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            sweeps: 2000,
            burn_in: 0.5,
            thin: 1,
            spline: SplineConfig::default(),
            g: None,
            tau_prior: InverseGammaPrior::default(),
            fdr_level: 0.2,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 || self.thin == 0 {
            return Err(Error::Config("selection sweeps and thinning must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::Config("burn-in fraction must lie in [0, 1)".into()));
        }
        let burn = (self.sweeps as f64 * self.burn_in).floor() as usize;
        if self.sweeps - burn < self.thin {
            return Err(Error::Config("selection chain records nothing after burn-in".into()));
        }
        if !(self.fdr_level > 0.0 && self.fdr_level < 1.0) {
            return Err(Error::Config("FDR level must lie in (0, 1)".into()));
        }
        if self.g.is_some_and(|g| g.is_nan() || g <= 0.0) {
            return Err(Error::Config("g must be positive".into()));
        }
        if self.spline.order == 0 {
            return Err(Error::Config("spline order must be at least 1".into()));
        }
        if !(self.tau_prior.shape > 0.0 && self.tau_prior.scale > 0.0) {
            return Err(Error::Config("tau prior parameters must be positive".into()));
        }
        Ok(())
    }

    fn g_for(&self, n: usize) -> f64 {
        self.g.unwrap_or(n as f64)
    }
}

/// Candidate covariates and outcomes for the selection model.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionProblem {
    /// Per merged cluster, the values over subjects of each member probe.
    pub candidates: Vec<Vec<Vec<f64>>>,
    pub log_time: Vec<f64>,
    pub event: Vec<bool>,
}

impl SelectionProblem {
    pub fn new(candidates: Vec<Vec<Vec<f64>>>, log_time: Vec<f64>, event: Vec<bool>) -> Result<Self> {
        let n = log_time.len();
        if n < 2 || event.len() != n {
            return Err(Error::Structural(format!(
                "{n} log times and {} event flags",
                event.len()
            )));
        }
        for (k, c) in candidates.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::Structural(format!("cluster {k} has no members")));
            }
            if c.iter().any(|x| x.len() != n) {
                return Err(Error::Structural(format!("cluster {k} has a covariate of the wrong length")));
            }
        }
        Ok(Self {
            candidates,
            log_time,
            event,
        })
    }

    /// Candidates from the probes of each merged cluster and outcomes from
    /// the dataset's clinical records.
    pub fn from_dataset(data: &TransformedDataset, merged: &MergedClusters) -> Result<Self> {
        let clinical = data
            .clinical
            .as_ref()
            .ok_or_else(|| Error::Argument("dataset has no clinical outcomes".into()))?;
        let candidates = merged
            .clusters
            .iter()
            .map(|c| c.members.iter().map(|&(t, j)| data.platforms[t].probe(j).to_vec()).collect())
            .collect();
        Self::new(candidates, clinical.log_time.clone(), clinical.event.clone())
    }

    pub fn n(&self) -> usize {
        self.log_time.len()
    }

    pub fn k(&self) -> usize {
        self.candidates.len()
    }
}

/// Current values of the selection chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionState {
    pub roles: Vec<Role>,
    pub omega: [f64; 3],
    /// Index into each cluster's members of its current representative.
    pub representatives: Vec<usize>,
    pub beta: DVector<f64>,
    pub tau2: f64,
    /// Log times with censored entries imputed.
    pub y: Vec<f64>,
}

impl SelectionState {
    /// Empty model, equal role probabilities, representatives drawn
    /// uniformly, and the observed log times.
    pub fn initial<R: Rng + ?Sized>(problem: &SelectionProblem, rng: &mut R) -> Self {
        let n = problem.n() as f64;
        let y = problem.log_time.clone();
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            roles: vec![Role::Excluded; problem.k()],
            omega: [1.0 / 3.0; 3],
            representatives: problem.candidates.iter().map(|c| rng.random_range(0..c.len())).collect(),
            beta: DVector::from_element(1, mean),
            tau2: if var > 0.0 { var } else { 1.0 },
            y,
        }
    }

    pub fn design(&self, problem: &SelectionProblem, spline: &SplineConfig) -> Result<DMatrix<f64>> {
        design_for(&self.roles, &self.representatives, problem, spline)
    }

    /// Design-size constraint and coefficient dimension.
    pub fn validate(&self, problem: &SelectionProblem, spline: &SplineConfig) -> Result<()> {
        let q = design_columns(&self.roles, spline);
        if q >= problem.n() {
            return Err(Error::Constraint(format!("{q} design columns for {} subjects", problem.n())));
        }
        if self.beta.len() != q {
            return Err(Error::Structural(format!("{} coefficients for {q} columns", self.beta.len())));
        }
        if (self.omega.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Structural("role probabilities do not sum to one".into()));
        }
        Ok(())
    }
}

fn design_for(
    roles: &[Role],
    reps: &[usize],
    problem: &SelectionProblem,
    spline: &SplineConfig,
) -> Result<DMatrix<f64>> {
    build_design(roles, |k| &problem.candidates[k][reps[k]], problem.n(), spline)
}

/// Log marginal likelihood of `y` with coefficients integrated out, or
/// `None` when the design breaks the size constraint.
fn collapsed_log_lik(
    roles: &[Role],
    reps: &[usize],
    y: &DVector<f64>,
    tau2: f64,
    g: f64,
    problem: &SelectionProblem,
    spline: &SplineConfig,
) -> Option<f64> {
    let u = design_for(roles, reps, problem, spline).ok()?;
    Some(gprior::log_marginal(&gprior::fit_gram(&u, y), tau2, g))
}

/// Redraw the role of cluster `k` from its three-way conditional with the
/// coefficients integrated out.
pub fn update_role<R: Rng + ?Sized>(
    k: usize,
    state: &mut SelectionState,
    problem: &SelectionProblem,
    config: &SelectionConfig,
    rng: &mut R,
) {
    let g = config.g_for(problem.n());
    let y = DVector::from_column_slice(&state.y);
    let mut roles = state.roles.clone();
    let w: Vec<f64> = Role::ALL
        .iter()
        .map(|&r| {
            roles[k] = r;
            match collapsed_log_lik(&roles, &state.representatives, &y, state.tau2, g, problem, &config.spline) {
                Some(l) => state.omega[r.index()].ln() + l,
                None => f64::NEG_INFINITY,
            }
        })
        .collect();
    state.roles[k] = Role::ALL[sample_log_weights(&w, rng)];
}

/// Redraw the representative of cluster `k`: uniform over members when the
/// cluster is excluded, otherwise proportional to the collapsed likelihood.
pub fn elect_representative<R: Rng + ?Sized>(
    k: usize,
    state: &mut SelectionState,
    problem: &SelectionProblem,
    config: &SelectionConfig,
    rng: &mut R,
) -> usize {
    let members = problem.candidates[k].len();
    let pick = if members == 1 {
        0
    } else if !state.roles[k].included() {
        rng.random_range(0..members)
    } else {
        let g = config.g_for(problem.n());
        let y = DVector::from_column_slice(&state.y);
        let mut reps = state.representatives.clone();
        let w: Vec<f64> = (0..members)
            .map(|m| {
                reps[k] = m;
                collapsed_log_lik(&state.roles, &reps, &y, state.tau2, g, problem, &config.spline)
                    .unwrap_or(f64::NEG_INFINITY)
            })
            .collect();
        sample_log_weights(&w, rng)
    };
    state.representatives[k] = pick;
    pick
}

/// One sweep: roles, role probabilities, representatives (all with the
/// coefficients integrated out), then coefficients, residual variance and
/// censored log times.
pub fn selection_sweep<R: Rng + ?Sized>(
    state: &mut SelectionState,
    problem: &SelectionProblem,
    config: &SelectionConfig,
    rng: &mut R,
) -> Result<()> {
    for k in 0..problem.k() {
        update_role(k, state, problem, config, rng);
    }
    let [k0, k1, k2] = design::role_counts(&state.roles);
    let dir = Dirichlet::new([1.0 + k0 as f64, 1.0 + k1 as f64, 1.0 + k2 as f64])
        .map_err(|e| Error::Argument(e.to_string()))?;
    state.omega = dir.sample(rng);
    for k in 0..problem.k() {
        elect_representative(k, state, problem, config, rng);
    }
    let g = config.g_for(problem.n());
    let u = state.design(problem, &config.spline)?;
    let y = DVector::from_column_slice(&state.y);
    let fit = gprior::fit_gram(&u, &y);
    state.beta = gprior::sample_beta(&fit, state.tau2, g, rng);
    state.tau2 = gprior::sample_tau2(&u, &y, &state.beta, g, &config.tau_prior, rng);
    let eta = &u * &state.beta;
    augment::augment_censored(&mut state.y, &problem.log_time, &problem.event, eta.as_slice(), state.tau2, rng);
    Ok(())
}

/// One recorded selection sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionSample {
    pub sweep: usize,
    pub roles: Vec<Role>,
    pub representatives: Vec<usize>,
    pub omega: [f64; 3],
    pub tau2: f64,
}

/// Posterior summaries of the selection chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub samples: Vec<SelectionSample>,
    /// Posterior probability that each cluster is a predictor.
    pub inclusion: Vec<f64>,
    pub linear: Vec<f64>,
    pub nonlinear: Vec<f64>,
    /// Per cluster, posterior frequency of each member as representative.
    pub representative_freq: Vec<Vec<f64>>,
    pub fdr: FdrSelection,
}

/// Run the selection chain from a seed and summarise it.
pub fn run_stage2(problem: &SelectionProblem, config: &SelectionConfig, seed: u64) -> Result<SelectionResult> {
    config.validate()?;
    let mut rng = rng::stream(seed, rng::stream_id(rng::purpose::STAGE2, 0));
    let mut state = SelectionState::initial(problem, &mut rng);
    let burn = (config.sweeps as f64 * config.burn_in).floor() as usize;
    let mut samples = Vec::new();
    for sweep in 0..config.sweeps {
        selection_sweep(&mut state, problem, config, &mut rng)?;
        if sweep >= burn && (sweep - burn) % config.thin == config.thin - 1 {
            samples.push(SelectionSample {
                sweep,
                roles: state.roles.clone(),
                representatives: state.representatives.clone(),
                omega: state.omega,
                tau2: state.tau2,
            });
        }
    }
    let roles: Vec<&[Role]> = samples.iter().map(|s| s.roles.as_slice()).collect();
    let inclusion = inclusion_probs(&roles)?;
    let m = samples.len() as f64;
    let freq = |role: Role| -> Vec<f64> {
        (0..problem.k())
            .map(|k| samples.iter().filter(|s| s.roles[k] == role).count() as f64 / m)
            .collect()
    };
    let representative_freq = problem
        .candidates
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let mut counts = vec![0usize; c.len()];
            for s in &samples {
                counts[s.representatives[k]] += 1;
            }
            counts.into_iter().map(|n| n as f64 / m).collect()
        })
        .collect();
    let fdr = fdr_select(&inclusion, config.fdr_level)?;
    Ok(SelectionResult {
        linear: freq(Role::Linear),
        nonlinear: freq(Role::Nonlinear),
        inclusion,
        representative_freq,
        fdr,
        samples,
    })
}
