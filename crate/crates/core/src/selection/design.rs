//! Regression design matrices with linear and truncated-power spline terms.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a merged cluster enters the outcome regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Excluded,
    Linear,
    Nonlinear,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Excluded, Role::Linear, Role::Nonlinear];

    pub fn index(self) -> usize {
        match self {
            Role::Excluded => 0,
            Role::Linear => 1,
            Role::Nonlinear => 2,
        }
    }

    /// The one-hot indicator triplet `(excluded, linear, nonlinear)`.
    pub fn triplet(self) -> [u8; 3] {
        let mut t = [0; 3];
        t[self.index()] = 1;
        t
    }

    pub fn included(self) -> bool {
        self != Role::Excluded
    }
}

/// Truncated power basis of order `order` with `knots` interior knots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplineConfig {
    pub order: usize,
    pub knots: usize,
}

impl Default for SplineConfig {
    fn default() -> Self {
        Self { order: 1, knots: 1 }
    }
}

impl SplineConfig {
    pub fn columns(&self) -> usize {
        self.order + self.knots
    }
}

/// Counts of excluded, linear and nonlinear clusters.
pub fn role_counts(roles: &[Role]) -> [usize; 3] {
    let mut c = [0; 3];
    for r in roles {
        c[r.index()] += 1;
    }
    c
}

/// Number of design columns: intercept, one per linear cluster and
/// `order + knots` per nonlinear cluster.
pub fn design_columns(roles: &[Role], spline: &SplineConfig) -> usize {
    let [_, k1, k2] = role_counts(roles);
    k1 + k2 * spline.columns() + 1
}

/// Empirical quantiles at `l / (knots + 1)`, `l = 1..=knots`, with linear
/// interpolation between order statistics.
pub fn knot_locations(values: &[f64], knots: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    (1..=knots)
        .map(|l| {
            let h = (n - 1) as f64 * l as f64 / (knots + 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        })
        .collect()
}

/// Basis columns `x, x^2, ..., x^s, (x - k_1)_+^s, ..., (x - k_v)_+^s`.
pub fn spline_basis(values: &[f64], spline: &SplineConfig) -> Vec<Vec<f64>> {
    let s = spline.order as i32;
    let mut cols: Vec<Vec<f64>> = (1..=s).map(|p| values.iter().map(|x| x.powi(p)).collect()).collect();
    for k in knot_locations(values, spline.knots) {
        cols.push(values.iter().map(|x| (x - k).max(0.0).powi(s)).collect());
    }
    cols
}

/// Assemble the design for the given roles, with `covariate(k)` giving the
/// representative values of cluster `k`. Fails with a constraint error when
/// the design would have at least as many columns as rows.
pub fn build_design<'a>(
    roles: &[Role],
    covariate: impl Fn(usize) -> &'a [f64],
    n: usize,
    spline: &SplineConfig,
) -> Result<DMatrix<f64>> {
    let q = design_columns(roles, spline);
    if q >= n {
        return Err(Error::Constraint(format!("{q} design columns for {n} subjects")));
    }
    let mut u = DMatrix::zeros(n, q);
    u.column_mut(0).fill(1.0);
    let mut c = 1;
    for (k, role) in roles.iter().enumerate() {
        match role {
            Role::Excluded => {}
            Role::Linear => {
                let x = covariate(k);
                for i in 0..n {
                    u[(i, c)] = x[i];
                }
                c += 1;
            }
            Role::Nonlinear => {
                for col in spline_basis(covariate(k), spline) {
                    for i in 0..n {
                        u[(i, c)] = col[i];
                    }
                    c += 1;
                }
            }
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_count_formula() {
        let roles = [
            Role::Linear,
            Role::Linear,
            Role::Nonlinear,
            Role::Nonlinear,
            Role::Nonlinear,
            Role::Excluded,
        ];
        assert_eq!(design_columns(&roles, &SplineConfig::default()), 9);
        assert_eq!(design_columns(&[Role::Excluded; 4], &SplineConfig::default()), 1);
    }

    #[test]
    fn linear_spline_with_median_knot() {
        let x = [3.0, 1.0, 2.0, 5.0, 4.0];
        let basis = spline_basis(&x, &SplineConfig::default());
        assert_eq!(basis.len(), 2);
        assert_eq!(basis[0], x.to_vec());
        assert_eq!(basis[1], vec![0.0, 0.0, 0.0, 2.0, 1.0]);
    }

    #[test]
    fn quantiles_interpolate() {
        assert_eq!(knot_locations(&[1.0, 2.0, 3.0, 4.0], 1), vec![2.5]);
        assert_eq!(knot_locations(&[0.0, 10.0], 3), vec![2.5, 5.0, 7.5]);
    }

    #[test]
    fn empty_model_is_intercept_only() {
        let x = vec![1.0; 4];
        let u = build_design(&[Role::Excluded], |_| &x, 4, &SplineConfig::default()).unwrap();
        assert_eq!(u.shape(), (4, 1));
        assert!(u.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn oversized_design_is_rejected() {
        let x = vec![0.0, 1.0, 2.0];
        let e = build_design(&[Role::Nonlinear], |_| &x, 3, &SplineConfig::default());
        assert!(matches!(e, Err(Error::Constraint(_))));
    }

    #[test]
    fn triplets_are_one_hot() {
        for r in Role::ALL {
            assert_eq!(r.triplet().iter().sum::<u8>(), 1);
            assert_eq!(r.triplet()[r.index()], 1);
        }
    }
}
