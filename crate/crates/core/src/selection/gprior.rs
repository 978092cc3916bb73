//! Conjugate Gaussian regression under Zellner's g-prior
//! `beta ~ N(0, g * tau2 * (U'U)^-1)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::mcmc::noise::sample_inverse_gamma;
use crate::model::InverseGammaPrior;

/// Sufficient quantities of one design and response.
#[derive(Debug, Clone)]
pub struct GramFit {
    pub n: usize,
    pub q: usize,
    pub yty: f64,
    /// `y' U (U'U)^-1 U' y`
    pub ypy: f64,
    /// Least-squares coefficients.
    pub bhat: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    /// Ridge added to the Gram diagonal to make it factorable, if any.
    pub jitter: f64,
}

const JITTER: f64 = 1e-8;

/// Factor `U'U`, adding a small ridge when it is singular.
pub fn fit_gram(u: &DMatrix<f64>, y: &DVector<f64>) -> GramFit {
    let gram = u.tr_mul(u);
    let uty = u.tr_mul(y);
    let mut jitter = 0.0;
    let chol = loop {
        let mut g = gram.clone();
        for i in 0..g.nrows() {
            g[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(g) {
            break c;
        }
        jitter = if jitter == 0.0 { JITTER } else { jitter * 100.0 };
        log::debug!("singular Gram matrix, adding ridge {jitter:e}");
    };
    let bhat = chol.solve(&uty);
    GramFit {
        n: u.nrows(),
        q: u.ncols(),
        yty: y.dot(y),
        ypy: bhat.dot(&uty),
        bhat,
        chol,
        jitter,
    }
}

/// Log density of `y` given `tau2` with the coefficients integrated out.
pub fn log_marginal(fit: &GramFit, tau2: f64, g: f64) -> f64 {
    let n = fit.n as f64;
    let q = fit.q as f64;
    let quad = fit.yty - g / (1.0 + g) * fit.ypy;
    -0.5 * n * (2.0 * std::f64::consts::PI * tau2).ln() - 0.5 * q * (1.0 + g).ln() - quad / (2.0 * tau2)
}

/// Draw coefficients from `N(g/(1+g) bhat, g/(1+g) tau2 (U'U)^-1)`.
pub fn sample_beta<R: Rng + ?Sized>(fit: &GramFit, tau2: f64, g: f64, rng: &mut R) -> DVector<f64> {
    let shrink = g / (1.0 + g);
    let z = DVector::from_fn(fit.q, |_, _| StandardNormal.sample(rng));
    let lt = fit.chol.l().transpose();
    let x = lt.solve_upper_triangular(&z).expect("triangular factor has positive diagonal");
    &fit.bhat * shrink + x * (shrink * tau2).sqrt()
}

/// Draw the residual variance given coefficients, which also enter through
/// their g-prior.
pub fn sample_tau2<R: Rng + ?Sized>(
    u: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    g: f64,
    prior: &InverseGammaPrior,
    rng: &mut R,
) -> f64 {
    let fitted = u * beta;
    let ssr = (y - &fitted).norm_squared();
    let post = InverseGammaPrior {
        shape: prior.shape + 0.5 * (u.nrows() + u.ncols()) as f64,
        scale: prior.scale + 0.5 * ssr + fitted.norm_squared() / (2.0 * g),
    };
    sample_inverse_gamma(&post, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn least_squares_and_projection() {
        let u = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0]);
        let fit = fit_gram(&u, &y);
        assert!((fit.bhat[0] - 1.0).abs() < 1e-12 && (fit.bhat[1] - 2.0).abs() < 1e-12);
        assert!((fit.ypy - fit.yty).abs() < 1e-10);
        assert_eq!(fit.jitter, 0.0);
    }

    #[test]
    fn duplicate_columns_get_a_ridge() {
        let u = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let fit = fit_gram(&u, &y);
        assert!(fit.jitter > 0.0);
        assert!(fit.bhat.iter().all(|b| b.is_finite()));
    }

    #[test]
    fn beta_draws_have_shrunken_mean() {
        let u = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let y = DVector::from_vec(vec![2.0, 4.1, 5.9, 8.0]);
        let fit = fit_gram(&u, &y);
        let g = 4.0;
        let mut r = rng::stream(9, 0);
        let m = 40_000;
        let mean = (0..m).map(|_| sample_beta(&fit, 0.5, g, &mut r)[0]).sum::<f64>() / m as f64;
        let sd = (0.8 * 0.5 / 30.0f64).sqrt() / (m as f64).sqrt();
        assert!((mean - 0.8 * fit.bhat[0]).abs() < 4.0 * sd);
    }
}
