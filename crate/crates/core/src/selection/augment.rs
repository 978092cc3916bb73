//! Data augmentation for right-censored log survival times.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Draw from the standard normal restricted to `(a, inf)`. Uses plain
/// rejection for small `a` and exponential rejection in the tail.
pub fn standard_normal_above<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a < 0.5 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z > a {
                return z;
            }
        }
    }
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let u: f64 = rng.random();
        let z = a - (1.0 - u).ln() / lambda;
        let v: f64 = rng.random();
        if v <= (-0.5 * (z - lambda).powi(2)).exp() {
            return z;
        }
    }
}

/// Refresh the latent log times of censored subjects from
/// `N(eta_i, tau2)` truncated below at the observed log time. Event times
/// are left as observed.
pub fn augment_censored<R: Rng + ?Sized>(
    y: &mut [f64],
    log_time: &[f64],
    event: &[bool],
    eta: &[f64],
    tau2: f64,
    rng: &mut R,
) {
    let tau = tau2.sqrt();
    for i in 0..y.len() {
        if event[i] {
            y[i] = log_time[i];
        } else {
            let a = (log_time[i] - eta[i]) / tau;
            y[i] = eta[i] + tau * standard_normal_above(a, rng);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn uncensored_values_are_kept() {
        let mut y = vec![0.0; 3];
        let lt = [0.5, 1.5, -2.0];
        augment_censored(&mut y, &lt, &[true; 3], &[9.0; 3], 1.0, &mut rng::stream(1, 0));
        assert_eq!(y, lt.to_vec());
    }

    #[test]
    fn tail_draws_respect_bound_and_mean() {
        // mean of N(0,1) truncated to (a, inf) is pdf(a) / (1 - cdf(a))
        let mut r = rng::stream(2, 0);
        let a = 3.0;
        let m = 100_000;
        let draws: Vec<f64> = (0..m).map(|_| standard_normal_above(a, &mut r)).collect();
        assert!(draws.iter().all(|&z| z > a));
        let mean = draws.iter().sum::<f64>() / m as f64;
        assert!((mean - 3.283_152_4).abs() < 0.01, "{mean}");
    }
}
