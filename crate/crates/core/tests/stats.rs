mod common;

use common::{ks_uniform_p, ranks};
use fedbrain_core::stats::{
    chi2_yates, kruskal_wallis, logistic_fit, mann_whitney_u, wilcoxon_signed_rank, Direction,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal as StatrsNormal};

fn normal_sample(rng: &mut ChaCha8Rng, n: usize, mu: f64) -> Vec<f64> {
    let d = Normal::new(mu, 1.0).unwrap();
    (0..n).map(|_| d.sample(rng)).collect()
}

#[test]
fn wilcoxon_null_p_values_are_uniform() {
    let ps: Vec<f64> = (0..1000)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let diffs = normal_sample(&mut rng, 100, 0.0);
            wilcoxon_signed_rank(&diffs).unwrap().p_value
        })
        .collect();
    let p = ks_uniform_p(&ps);
    assert!(p > 0.01, "KS p {p}");
}

#[test]
fn wilcoxon_large_sample_matches_normal_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let diffs: Vec<f64> = normal_sample(&mut rng, 200, 0.15);
    let r = wilcoxon_signed_rank(&diffs).unwrap();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let rk = ranks(&abs);
    let w: f64 = diffs
        .iter()
        .zip(&rk)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let n: f64 = 200.0;
    let mu = n * (n + 1.0) / 4.0;
    let sd = (n * (n + 1.0) * (2.0 * n + 1.0) / 24.0).sqrt();
    let z = ((w - mu).abs() - 0.5) / sd;
    let expected = 2.0 * (1.0 - StatrsNormal::standard().cdf(z));
    assert_eq!(r.statistic, w);
    assert!(
        (r.p_value - expected).abs() < 1e-9,
        "{} vs {expected}",
        r.p_value
    );
}

#[test]
fn mann_whitney_detects_one_sd_shift() {
    let hits = (0..100)
        .filter(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = normal_sample(&mut rng, 200, 1.0);
            let b = normal_sample(&mut rng, 200, 0.0);
            let r = mann_whitney_u(&a, &b).unwrap();
            r.p_value < 0.001 && r.direction == Direction::Positive
        })
        .count();
    assert!(hits >= 95, "detected in {hits}/100 seeds");
}

#[test]
fn kruskal_null_p_values_are_uniform() {
    let ps: Vec<f64> = (0..1000)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let groups: Vec<Vec<f64>> = (0..16).map(|_| normal_sample(&mut rng, 12, 0.0)).collect();
            let refs: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
            kruskal_wallis(&refs).unwrap().p_value
        })
        .collect();
    let p = ks_uniform_p(&ps);
    assert!(p > 0.01, "KS p {p}");
}

#[test]
fn kruskal_p_is_chi_squared_tail() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let groups: Vec<Vec<f64>> = (0..5)
        .map(|g| normal_sample(&mut rng, 30, 0.1 * g as f64))
        .collect();
    let refs: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
    let r = kruskal_wallis(&refs).unwrap();
    let expected = 1.0 - ChiSquared::new(4.0).unwrap().cdf(r.statistic);
    assert!(
        (r.p_value - expected).abs() < 1e-9,
        "{} vs {expected}",
        r.p_value
    );
}

#[test]
fn yates_p_is_chi_squared_tail() {
    let r = chi2_yates([[12, 5], [7, 14]]).unwrap();
    let expected = 1.0 - ChiSquared::new(1.0).unwrap().cdf(r.statistic);
    assert!((r.p_value - expected).abs() < 1e-9);
}

#[test]
fn logistic_recovers_planted_coefficient() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = normal_sample(&mut rng, 5000, 0.0);
    let y: Vec<bool> = x
        .iter()
        .map(|&v| {
            Bernoulli::new(1.0 / (1.0 + (-0.5 * v).exp()))
                .unwrap()
                .sample(&mut rng)
        })
        .collect();
    let design: Vec<Vec<f64>> = x.iter().map(|&v| vec![1.0, v]).collect();
    let names = vec!["intercept".to_string(), "x".to_string()];
    let fit = logistic_fit(&design, &y, &names).unwrap();
    assert!(fit.converged);
    let (b, se) = (fit.coefficients[1], fit.std_errors[1]);
    assert!((b - 0.5).abs() < 3.0 * se, "coefficient {b} ± {se}");
    assert!(fit.coefficients[0].abs() < 3.0 * fit.std_errors[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mann_whitney_ignores_monotone_transforms(
        a in prop::collection::vec(-50f64..50.0, 1..15),
        b in prop::collection::vec(-50f64..50.0, 1..15),
    ) {
        let f = |v: &f64| v * v * v + 3.0 * v;
        let r = mann_whitney_u(&a, &b).unwrap();
        let ta: Vec<f64> = a.iter().map(f).collect();
        let tb: Vec<f64> = b.iter().map(f).collect();
        let t = mann_whitney_u(&ta, &tb).unwrap();
        prop_assert_eq!(r.statistic, t.statistic);
        prop_assert_eq!(r.p_value, t.p_value);
        prop_assert!((0.0..=1.0).contains(&r.p_value));
    }

    #[test]
    fn wilcoxon_p_in_unit_interval(d in prop::collection::vec(-5f64..5.0, 1..60)) {
        if let Ok(r) = wilcoxon_signed_rank(&d) {
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
    }

    #[test]
    fn wald_interval_contains_odds_ratio(seed in any::<u64>(), beta in -1.5f64..1.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| vec![1.0, rng.random_range(-2.0..2.0), f64::from(rng.random::<bool>())])
            .collect();
        let y: Vec<bool> = rows
            .iter()
            .map(|r| rng.random::<f64>() < 1.0 / (1.0 + (-(beta * r[1] + 0.3 * r[2])).exp()))
            .collect();
        let names: Vec<String> = ["intercept", "x", "z"].iter().map(|s| s.to_string()).collect();
        if let Ok(fit) = logistic_fit(&rows, &y, &names) {
            for i in 0..3 {
                prop_assert!((fit.odds_ratios[i] - fit.coefficients[i].exp()).abs() <= 1e-12 * fit.odds_ratios[i]);
                prop_assert!(fit.ci_lower[i] <= fit.odds_ratios[i] && fit.odds_ratios[i] <= fit.ci_upper[i]);
            }
        }
    }
}
