//! Posterior inclusion probabilities and Bayesian false discovery rate
//! thresholding.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::selection::design::Role;

/// Fraction of recorded samples in which each cluster is a predictor.
pub fn inclusion_probs<S: AsRef<[Role]>>(trace: &[S]) -> Result<Vec<f64>> {
    let first = trace
        .first()
        .ok_or_else(|| Error::Argument("empty selection trace".into()))?;
    let k = first.as_ref().len();
    let mut counts = vec![0usize; k];
    for s in trace {
        let s = s.as_ref();
        if s.len() != k {
            return Err(Error::Argument("trace samples differ in length".into()));
        }
        for (c, r) in counts.iter_mut().zip(s) {
            *c += usize::from(r.included());
        }
    }
    let m = trace.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / m).collect())
}

/// Selected clusters (ascending) and the probability cutoff used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdrSelection {
    pub selected: Vec<usize>,
    pub cutoff: Option<f64>,
}

/// Select the largest top-ranked set whose expected false discoveries,
/// summed `1 - b`, stay within `alpha`; every cluster at or above the
/// resulting cutoff is selected.
pub fn fdr_select(b_hat: &[f64], alpha: f64) -> Result<FdrSelection> {
    if let Some(b) = b_hat.iter().find(|b| !(0.0..=1.0).contains(*b)) {
        return Err(Error::Argument(format!("inclusion probability {b} outside [0, 1]")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Argument(format!("FDR level {alpha} outside [0, 1]")));
    }
    let mut sorted = b_hat.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut l = 0;
    for (i, b) in sorted.iter().enumerate() {
        cum += 1.0 - b;
        if cum <= alpha {
            l = i + 1;
        } else {
            break;
        }
    }
    if l == 0 {
        return Ok(FdrSelection {
            selected: Vec::new(),
            cutoff: None,
        });
    }
    let psi = sorted[l - 1];
    Ok(FdrSelection {
        selected: (0..b_hat.len()).filter(|&k| b_hat[k] >= psi).collect(),
        cutoff: Some(psi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        let s = fdr_select(&[0.95, 0.90, 0.50], 0.2).unwrap();
        assert_eq!(s.selected, vec![0, 1]);
        assert_eq!(s.cutoff, Some(0.90));
    }

    #[test]
    fn certain_predictors_always_selected() {
        let s = fdr_select(&[1.0; 4], 0.01).unwrap();
        assert_eq!(s.selected.len(), 4);
    }

    #[test]
    fn zero_level_with_uncertainty_selects_nothing() {
        let s = fdr_select(&[0.99, 0.5], 0.0).unwrap();
        assert!(s.selected.is_empty());
        assert_eq!(s.cutoff, None);
    }

    #[test]
    fn inclusion_counts() {
        use Role::*;
        let trace = vec![vec![Linear], vec![Nonlinear], vec![Excluded], vec![Linear]];
        assert_eq!(inclusion_probs(&trace).unwrap(), vec![0.75]);
        assert_eq!(inclusion_probs(&[vec![Excluded, Linear], vec![Excluded, Excluded]]).unwrap(), vec![0.0, 0.5]);
    }

    #[test]
    fn rejects_bad_probabilities() {
        assert!(fdr_select(&[1.2], 0.1).is_err());
    }
}
