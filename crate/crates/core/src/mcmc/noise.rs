//! Conjugate update of the noise variance.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::model::{BlockStats, InverseGammaPrior, LatentMatrices};

/// Inverse-gamma posterior after observing `count` residuals with sum of
/// squares `ssr`.
pub fn sigma_posterior(prior: &InverseGammaPrior, count: f64, ssr: f64) -> InverseGammaPrior {
    InverseGammaPrior {
        shape: prior.shape + 0.5 * count,
        scale: prior.scale + 0.5 * ssr,
    }
}

/// Draw a variance from an inverse-gamma distribution.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(ig: &InverseGammaPrior, rng: &mut R) -> f64 {
    let g = Gamma::new(ig.shape, 1.0 / ig.scale).expect("positive inverse-gamma parameters");
    1.0 / g.sample(rng)
}

/// Residual sum of squares and cell count per platform.
pub fn residuals(latents: &LatentMatrices, stats: &[Vec<BlockStats>]) -> Vec<(f64, f64)> {
    latents
        .platforms
        .iter()
        .zip(stats)
        .map(|(m, s)| {
            m.cells().iter().zip(s).fold((0.0, 0.0), |acc, (c, b)| {
                let phi = c.value;
                let ssr = (b.sum_sq - 2.0 * phi * b.sum + b.count * phi * phi).max(0.0);
                (acc.0 + ssr, acc.1 + b.count)
            })
        })
        .collect()
}

/// Redraw the noise sd in place, shared across platforms unless
/// `per_platform` is set. The floor keeps noiseless inputs numerically sane.
pub fn update_sigma<R: Rng + ?Sized>(
    latents: &mut LatentMatrices,
    stats: &[Vec<BlockStats>],
    prior: &InverseGammaPrior,
    per_platform: bool,
    rng: &mut R,
) {
    const FLOOR: f64 = 1e-6;
    let res = residuals(latents, stats);
    if per_platform {
        for (t, (ssr, n)) in res.iter().enumerate() {
            let var = sample_inverse_gamma(&sigma_posterior(prior, *n, *ssr), rng);
            latents.noise_sd[t] = var.sqrt().max(FLOOR);
        }
    } else {
        let (ssr, n) = res.iter().fold((0.0, 0.0), |a, r| (a.0 + r.0, a.1 + r.1));
        let sd = sample_inverse_gamma(&sigma_posterior(prior, n, ssr), rng).sqrt().max(FLOOR);
        latents.noise_sd.iter_mut().for_each(|s| *s = sd);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LatentCell, LatentMatrix};
    use crate::rng;

    #[test]
    fn conjugate_parameters_for_one_residual() {
        let prior = InverseGammaPrior {
            shape: 0.01,
            scale: 0.01,
        };
        let r: f64 = 0.7;
        let post = sigma_posterior(&prior, 1.0, r * r);
        assert_eq!(post.shape, 0.01 + 0.5);
        assert!((post.scale - (0.01 + r * r / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_residuals_concentrate_near_zero() {
        let cell = LatentCell {
            value: 1.0,
            atom: 0,
            table: 0,
        };
        let mut latents = LatentMatrices {
            platforms: vec![LatentMatrix::new(1, 1, vec![cell]).unwrap()],
            noise_sd: vec![1.0],
        };
        let stats = vec![vec![BlockStats {
            count: 1e4,
            sum: 1e4,
            sum_sq: 1e4,
        }]];
        let mut r = rng::stream(3, 0);
        let mut draws: Vec<f64> = (0..201)
            .map(|_| {
                update_sigma(&mut latents, &stats, &InverseGammaPrior::default(), false, &mut r);
                latents.noise_sd[0]
            })
            .collect();
        draws.sort_by(f64::total_cmp);
        assert!(draws[100] < 0.01, "median {}", draws[100]);
    }
}
