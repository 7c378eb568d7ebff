mod common;

use common::{mean, ols};
use fedbrain_core::brainage::{correct_brainage_cv, fit_bias_line, PredictionRecord};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Records whose PAD is `slope · (age − 70) + offset[i] + noise`.
fn records(
    seed: u64,
    n: usize,
    slope: f64,
    noise_sd: f64,
    offset: impl Fn(usize) -> f64,
) -> Vec<PredictionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd).unwrap();
    (0..n)
        .map(|i| {
            let age = rng.random_range(30.0..95.0);
            let pad = slope * (age - 70.0) + offset(i) + noise.sample(&mut rng);
            PredictionRecord::new(i as u64 + 1, age, age + pad)
        })
        .collect()
}

fn slope_of_brainage(recs: &[PredictionRecord]) -> f64 {
    let ages: Vec<f64> = recs.iter().map(|r| r.actual_age).collect();
    let ba: Vec<f64> = recs.iter().map(|r| r.brainage.unwrap()).collect();
    fit_bias_line(&ba, &ages).unwrap().slope
}

#[test]
fn bias_line_recovers_planted_slope() {
    let recs = records(1, 1000, -0.35, 4.0, |_| 2.0);
    let ages: Vec<f64> = recs.iter().map(|r| r.actual_age).collect();
    let pads: Vec<f64> = recs.iter().map(|r| r.pad).collect();
    let line = fit_bias_line(&pads, &ages).unwrap();
    let (slope, intercept, se) = ols(&ages, &pads);
    assert!((line.slope - slope).abs() < 1e-9);
    assert!((line.intercept - intercept).abs() < 1e-7);
    assert!(
        (line.slope + 0.35).abs() < 3.0 * se,
        "slope {} ± {se}",
        line.slope
    );
}

#[test]
fn planted_subgroup_offset_survives_correction() {
    let in_group = |i: usize| i % 10 < 3;
    let recs = records(2, 1000, -0.3, 2.0, |i| if in_group(i) { 5.0 } else { 0.0 });
    let fixed = correct_brainage_cv(&recs, 10, 2).unwrap();

    let ages: Vec<f64> = recs.iter().map(|r| r.actual_age).collect();
    let pads: Vec<f64> = recs.iter().map(|r| r.pad).collect();
    let (b, a, _) = ols(&ages, &pads);
    let whole: Vec<f64> = recs
        .iter()
        .map(|r| r.pad - (a + b * r.actual_age))
        .collect();

    let split = |v: &[f64]| {
        let g: Vec<f64> = (0..v.len())
            .filter(|&i| in_group(i))
            .map(|i| v[i])
            .collect();
        let o: Vec<f64> = (0..v.len())
            .filter(|&i| !in_group(i))
            .map(|i| v[i])
            .collect();
        (mean(&g), mean(&o))
    };
    let cv: Vec<f64> = fixed.iter().map(|r| r.brainage.unwrap()).collect();
    let (g_cv, o_cv) = split(&cv);
    let (g_whole, o_whole) = split(&whole);
    assert!((g_cv - o_cv - 5.0).abs() < 0.5, "gap {}", g_cv - o_cv);
    assert!((g_cv - g_whole).abs() < 0.1 && (o_cv - o_whole).abs() < 0.1);
    // The correction line absorbs the subgroup's share of the offset.
    assert!((g_cv - 5.0 * 0.7).abs() < 0.5, "subgroup mean {g_cv}");
}

#[test]
fn refitting_corrected_values_finds_no_bias() {
    for seed in 0..5 {
        let recs = records(seed, 800, -0.4, 4.0, |_| 1.0);
        let fixed = correct_brainage_cv(&recs, 10, seed).unwrap();
        let s = slope_of_brainage(&fixed);
        assert!(s.abs() < 1e-3, "seed {seed}: slope {s}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn corrected_slope_is_flat(seed in any::<u64>(), n in 500usize..1500, slope in -0.8f64..0.2, sd in 0.5f64..8.0) {
        let recs = records(seed, n, slope, sd, |_| 0.0);
        let fixed = correct_brainage_cv(&recs, 10, seed).unwrap();
        let s = slope_of_brainage(&fixed);
        prop_assert!(s.abs() <= 0.02, "slope {}", s);
    }
}
