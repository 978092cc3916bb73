mod common;

use common::{crp_sequential_log_prob, exchangeability_max_error, set_partitions, sizes};
use omics_bnp::model::DiscountPrior;
use omics_bnp::partition::{
    canonicalize, log_eppf, partition_log_prob, pdp_predictive, sample_discount, sample_partition, stick_breaking,
    PartitionCounts,
};
use omics_bnp::rng;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

proptest! {
    #[test]
    fn predictive_sums_to_one(
        counts in prop::collection::vec(1usize..50, 0..12),
        d in 0.0f64..0.99,
        alpha in 0.01f64..50.0,
    ) {
        let p = pdp_predictive(&PartitionCounts::new(counts).unwrap(), d, alpha).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn zero_discount_is_the_crp_rule(counts in prop::collection::vec(1usize..50, 0..12), alpha in 0.01f64..50.0) {
        let total: usize = counts.iter().sum();
        let denom = total as f64 + alpha;
        let mut want: Vec<f64> = counts.iter().map(|&n| n as f64 / denom).collect();
        want.push(alpha / denom);
        let got = pdp_predictive(&PartitionCounts::new(counts).unwrap(), 0.0, alpha).unwrap();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn sequential_and_size_forms_agree(p in 1usize..30, d in 0.0f64..0.95, alpha in 0.05f64..20.0, seed in any::<u64>()) {
        let mut r = rng::stream(seed, 0);
        let labels = sample_partition(p, d, alpha, &mut r).unwrap();
        let seq = partition_log_prob(&labels, d, alpha).unwrap();
        prop_assert!((seq - crp_sequential_log_prob(&labels, d, alpha)).abs() < 1e-10);
        prop_assert!((seq - log_eppf(&sizes(&labels), d, alpha)).abs() < 1e-10);
    }
}

#[test]
fn exchangeable_over_all_orderings() {
    let worst = exchangeability_max_error(6, &[(0.0, 1.0), (0.5, 0.3), (0.9, 7.0)]);
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn probabilities_sum_to_one_over_all_partitions() {
    for k in 1..=5 {
        for (d, alpha) in [(0.0, 1.0), (0.3, 2.0), (0.75, 0.1)] {
            let total: f64 = set_partitions(k)
                .iter()
                .map(|p| partition_log_prob(p, d, alpha).unwrap().exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-10, "k={k} d={d}: {total}");
        }
    }
}

#[test]
fn hand_computed_log_probs() {
    assert!((partition_log_prob(&[0, 0], 0.0, 1.0).unwrap() - 0.5f64.ln()).abs() < 1e-15);
    // 1 * (1.5 / 2) * (0.5 / 3)
    assert!((partition_log_prob(&[0, 1, 0], 0.5, 1.0).unwrap() - 0.125f64.ln()).abs() < 1e-15);
}

#[test]
fn sampled_partition_frequencies_match_enumeration() {
    let (d, alpha, draws) = (0.5, 1.0, 1_000_000);
    let parts = set_partitions(4);
    assert_eq!(parts.len(), 15);
    let mut counts = vec![0usize; parts.len()];
    let mut r = rng::stream(21, 0);
    for _ in 0..draws {
        let s = sample_partition(4, d, alpha, &mut r).unwrap();
        counts[parts.iter().position(|p| *p == s).unwrap()] += 1;
    }
    for (p, c) in parts.iter().zip(counts) {
        let prob = partition_log_prob(p, d, alpha).unwrap().exp();
        let sd = (prob * (1.0 - prob) / draws as f64).sqrt();
        let freq = c as f64 / draws as f64;
        assert!((freq - prob).abs() < 3.0 * sd, "{p:?}: {freq} vs {prob}");
    }
}

fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 6.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let f = 1.0 / (x * x);
    acc + x.ln() - 0.5 / x - f * (1.0 / 12.0 - f * (1.0 / 120.0 - f * (1.0 / 252.0 - f / 240.0)))
}

fn mean_clusters(p: usize, alpha: f64, draws: usize, seed: u64) -> f64 {
    let mut r = rng::stream(seed, 0);
    (0..draws)
        .map(|_| *sample_partition(p, 0.0, alpha, &mut r).unwrap().iter().max().unwrap() as f64 + 1.0)
        .sum::<f64>()
        / draws as f64
}

#[test]
fn cluster_count_matches_exact_expectation() {
    let (p, alpha) = (10_000, 10.0);
    let exact = alpha * (digamma(alpha + p as f64) - digamma(alpha));
    let mean = mean_clusters(p, alpha, 200, 5);
    assert!((mean / exact - 1.0).abs() < 0.05, "{mean} vs {exact}");
}

/// The count grows like alpha log p: between p and 10p it gains about
/// alpha log 10.
#[test]
fn cluster_count_grows_logarithmically() {
    let alpha = 10.0;
    let gain = mean_clusters(10_000, alpha, 200, 6) - mean_clusters(1_000, alpha, 200, 7);
    let want = alpha * 10f64.ln();
    assert!((gain / want - 1.0).abs() < 0.15, "{gain} vs {want}");
}

#[test]
fn first_stick_weight_has_beta_mean() {
    let (alpha, draws) = (10.0, 100_000);
    let mut r = rng::stream(8, 0);
    let w: Vec<f64> = (0..draws)
        .map(|_| {
            stick_breaking(alpha, |r: &mut rng::Rng| StandardNormal.sample(r), 2000, &mut r)
                .unwrap()
                .weights[0]
        })
        .collect();
    let mean = w.iter().sum::<f64>() / draws as f64;
    // Beta(1, alpha) moments
    let want = 1.0 / (1.0 + alpha);
    let sd = (alpha / ((1.0 + alpha).powi(2) * (2.0 + alpha)) / draws as f64).sqrt();
    assert!((mean - want).abs() < 3.0 * sd, "{mean}");
}

#[test]
fn discount_prior_draws() {
    let draws = 100_000;
    let mut r = rng::stream(9, 0);
    let prior = DiscountPrior { zero_mass: 0.5 };
    let xs: Vec<f64> = (0..draws).map(|_| sample_discount(&prior, &mut r)).collect();
    assert!(xs.iter().all(|x| (0.0..1.0).contains(x)));
    let zeros = xs.iter().filter(|&&x| x == 0.0).count() as f64 / draws as f64;
    assert!((zeros - 0.5).abs() < 3.0 * (0.25 / draws as f64).sqrt(), "{zeros}");

    let mut nz: Vec<f64> = xs.into_iter().filter(|&x| x > 0.0).collect();
    nz.sort_by(f64::total_cmp);
    let m = nz.len() as f64;
    let ks = nz
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / m).max((i + 1) as f64 / m - x))
        .fold(0.0, f64::max);
    // Asymptotic Kolmogorov critical value at level 0.01
    assert!(ks < 1.628 / m.sqrt(), "{ks}");
}

#[test]
fn random_relabelings_keep_probability() {
    let mut r = rng::stream(10, 0);
    for _ in 0..200 {
        let labels = sample_partition(12, 0.3, 2.0, &mut r).unwrap();
        let k = labels.iter().max().unwrap() + 1;
        let mut relabel: Vec<usize> = (0..k).map(|l| l * 7 + 3).collect();
        for i in (1..k).rev() {
            relabel.swap(i, r.random_range(0..=i));
        }
        let scrambled: Vec<usize> = labels.iter().map(|&l| relabel[l]).collect();
        assert_eq!(canonicalize(&scrambled).0, labels);
    }
}
