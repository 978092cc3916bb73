//! Metropolis-Hastings moves on a PDP discount under the
//! point-mass-at-zero / uniform mixture prior.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::model::DiscountPrior;
use crate::partition::log_eppf;

/// Random-walk step size on (0, 1).
pub const WALK_SD: f64 = 0.05;
/// Probability of proposing a jump to zero from a positive discount.
const JUMP_TO_ZERO: f64 = 0.5;

fn reflect(mut x: f64) -> f64 {
    loop {
        if x < 0.0 {
            x = -x;
        } else if x >= 1.0 {
            x = 2.0 - x;
        } else {
            return x;
        }
    }
}

/// Log target over discounts for a fixed partition: the EPPF plus the log
/// prior mass (at zero) or log prior density (on (0, 1)).
pub fn discount_log_target(sizes: &[usize], d: f64, alpha: f64, prior: &DiscountPrior) -> f64 {
    let prior_term = if d == 0.0 {
        prior.zero_mass.ln()
    } else {
        (1.0 - prior.zero_mass).ln()
    };
    prior_term + log_eppf(sizes, d, alpha)
}

/// One MH step. Returns the new discount and whether the proposal was
/// accepted.
///
/// From zero the proposal is a uniform draw on (0, 1). From a positive value
/// it is a jump to zero with probability one half, otherwise a reflected
/// Gaussian random walk.
pub fn update_discount<R: Rng + ?Sized>(
    sizes: &[usize],
    current: f64,
    alpha: f64,
    prior: &DiscountPrior,
    rng: &mut R,
) -> (f64, bool) {
    if prior.zero_mass >= 1.0 {
        return (0.0, current != 0.0);
    }
    let can_jump = prior.zero_mass > 0.0;
    let here = discount_log_target(sizes, current, alpha, prior);
    let (proposal, log_q_ratio) = if current == 0.0 {
        let d = loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        };
        // reverse: jump-to-zero chosen with JUMP_TO_ZERO; forward density 1
        (d, JUMP_TO_ZERO.ln())
    } else if can_jump && rng.random::<f64>() < JUMP_TO_ZERO {
        (0.0, -JUMP_TO_ZERO.ln())
    } else {
        let step = Normal::new(0.0, WALK_SD).expect("valid sd").sample(rng);
        let d = reflect(current + step);
        if d == 0.0 {
            return (current, false);
        }
        (d, 0.0)
    };
    let there = discount_log_target(sizes, proposal, alpha, prior);
    let log_accept = there - here + log_q_ratio;
    if log_accept >= 0.0 || rng.random::<f64>().ln() < log_accept {
        (proposal, true)
    } else {
        (current, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::partition_log_prob;
    use crate::rng;

    #[test]
    fn target_uses_the_partition_probability() {
        let alloc = [0, 1, 0, 2, 2, 3];
        let sizes = crate::model::cluster_sizes(&alloc).unwrap();
        let prior = DiscountPrior::default();
        for d in [0.0, 0.2, 0.7] {
            let a = discount_log_target(&sizes, d, 1.5, &prior) - 0.5f64.ln();
            let b = partition_log_prob(&alloc, d, 1.5).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reflection_stays_inside() {
        for x in [-0.3, 1.2, 2.7, -1.9, 0.4] {
            let y = reflect(x);
            assert!((0.0..1.0).contains(&y), "{x} -> {y}");
        }
    }

    #[test]
    fn all_singletons_push_discount_up() {
        let sizes = vec![1; 200];
        let prior = DiscountPrior::default();
        let mut r = rng::stream(21, 0);
        let mut d = 0.0;
        let mut total = 0.0;
        let iters = 20_000;
        for _ in 0..iters {
            d = update_discount(&sizes, d, 1.0, &prior, &mut r).0;
            total += d;
        }
        assert!(total / iters as f64 > 0.5);
    }

    #[test]
    fn one_cluster_favours_zero() {
        let sizes = vec![40];
        let prior = DiscountPrior::default();
        let mut r = rng::stream(22, 0);
        let mut d = 0.3;
        let mut zeros = 0;
        let iters = 20_000;
        for _ in 0..iters {
            d = update_discount(&sizes, d, 1.0, &prior, &mut r).0;
            zeros += usize::from(d == 0.0);
        }
        assert!(zeros as f64 / iters as f64 > 0.5);
    }

    #[test]
    fn chain_matches_exact_posterior_mass_at_zero() {
        // posterior P(d = 0) by quadrature over the continuous part
        let sizes = vec![3, 1, 1, 2];
        let alpha = 1.0;
        let prior = DiscountPrior::default();
        let at_zero = discount_log_target(&sizes, 0.0, alpha, &prior).exp();
        let n = 100_000;
        let cont: f64 = (0..n)
            .map(|i| {
                let d = (i as f64 + 0.5) / n as f64;
                discount_log_target(&sizes, d, alpha, &prior).exp()
            })
            .sum::<f64>()
            / n as f64;
        let exact = at_zero / (at_zero + cont);
        let mut r = rng::stream(23, 0);
        let mut d = 0.0;
        let mut zeros = 0usize;
        let iters = 400_000;
        for _ in 0..iters {
            d = update_discount(&sizes, d, alpha, &prior, &mut r).0;
            zeros += usize::from(d == 0.0);
        }
        let got = zeros as f64 / iters as f64;
        assert!((got - exact).abs() < 0.01, "{got} vs {exact}");
    }
}
