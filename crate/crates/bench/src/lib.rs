//! Synthetic inputs shared by the benchmarks.

use fedbrain_core::model::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` rows of `d` uniform features with a noisy linear target.
pub fn linear_dataset(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
    let mut rows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let y =
            60.0 + x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-2.0..2.0);
        rows.push(x);
        targets.push(y);
    }
    Dataset::new(rows, targets).expect("well-formed rows")
}

/// `n` symmetric differences with a small positive shift.
pub fn paired_differences(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.2)).collect()
}

pub fn uniform_vector(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..d).map(|_| rng.random::<f64>()).collect()
}
