//! Unnormalised joint log density of the clustering model, computed from
//! scratch. Used for diagnostics and for checking the kernels' conditionals.

use crate::mcmc::atoms::AtomStore;
use crate::model::{
    dataset_log_likelihood, ClusterState, Hyperparameters, InverseGammaPrior, LatentMatrices,
    TransformedDataset,
};
use crate::partition::log_eppf;
use statrs::function::gamma::ln_gamma;

/// Log density of a variance `v` under an inverse-gamma prior.
pub fn inverse_gamma_log_density(v: f64, ig: &InverseGammaPrior) -> f64 {
    ig.shape * ig.scale.ln() - ln_gamma(ig.shape) - (ig.shape + 1.0) * v.ln() - ig.scale / v
}

/// Log prior of the atom hierarchy (seating and dish values) or of a fixed
/// atom measure.
pub fn atom_log_prior(latents: &LatentMatrices, store: &AtomStore) -> f64 {
    match store {
        AtomStore::Fixed(a) => latents
            .platforms
            .iter()
            .flat_map(|m| m.cells())
            .map(|c| a.weights[c.atom as usize].ln())
            .sum(),
        AtomStore::Franchise(f) => {
            let p = f.params;
            let mut total = 0.0;
            for r in &f.restaurants {
                let sizes: Vec<usize> = r.values().map(|t| t.cells).collect();
                total += log_eppf(&sizes, 0.0, p.local_mass);
            }
            let dish_sizes: Vec<usize> = f.dishes.values().map(|d| d.tables).collect();
            total += log_eppf(&dish_sizes, 0.0, p.global_mass);
            for d in f.dishes.values() {
                let z = (d.value - p.mu0) / p.tau0;
                total += -0.5 * z * z - p.tau0.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
            }
            total
        }
    }
}

/// Joint log density of data, allocations, latent seating, noise and
/// discounts, up to a constant.
pub fn joint_log_density(
    data: &TransformedDataset,
    state: &ClusterState,
    latents: &LatentMatrices,
    store: &AtomStore,
    hyper: &Hyperparameters,
    discounts: &[f64],
    per_platform_sigma: bool,
) -> f64 {
    let mut total = dataset_log_likelihood(data, state, latents).unwrap_or(f64::NEG_INFINITY);
    for (t, sizes) in state.column_sizes.iter().enumerate() {
        let d = discounts[t];
        total += log_eppf(sizes, d, hyper.alpha1);
        total += if d == 0.0 {
            hyper.discount_prior.zero_mass.ln()
        } else {
            (1.0 - hyper.discount_prior.zero_mass).ln()
        };
    }
    total += log_eppf(&state.row_sizes, 0.0, hyper.alpha2);
    total += atom_log_prior(latents, store);
    let variances: Vec<f64> = if per_platform_sigma {
        latents.noise_sd.iter().map(|s| s * s).collect()
    } else {
        vec![latents.noise_sd[0] * latents.noise_sd[0]]
    };
    for v in variances {
        total += inverse_gamma_log_density(v, &hyper.sigma_prior);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_gamma_density_integrates_to_one() {
        let ig = InverseGammaPrior { shape: 2.5, scale: 1.5 };
        let n = 200_000;
        let h = 60.0 / n as f64;
        let total: f64 = (1..n).map(|i| inverse_gamma_log_density(i as f64 * h, &ig).exp() * h).sum();
        assert!((total - 1.0).abs() < 1e-4, "{total}");
    }
}
