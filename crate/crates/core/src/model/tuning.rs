use rand::seq::SliceRandom;

use super::{predict, Dataset, ModelError, ModelSpec, TrainConfig};
use crate::rng::{rng_for, stream};

/// Candidate L2 weights used when none are configured.
pub const DEFAULT_L2_GRID: [f64; 6] = [0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];

fn cv_folds(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[stream::CV_SPLIT]));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

/// Mean over `k` folds of the held-out MAE for one penalty weight. Each fold
/// model starts its intercept at the mean age of its own training part.
pub fn cv_mae(
    train: &Dataset,
    l2: f64,
    k: usize,
    base_cfg: &TrainConfig,
    spec: &ModelSpec,
) -> Result<f64, ModelError> {
    if k < 2 || train.len() < k {
        return Err(ModelError::InsufficientData { n: train.len(), k });
    }
    let fold = cv_folds(train.len(), k, base_cfg.seed);
    let mut total = 0.0;
    for f in 0..k {
        let (fit_idx, held_idx): (Vec<usize>, Vec<usize>) =
            (0..train.len()).partition(|&i| fold[i] != f);
        let fit_set = train.subset(&fit_idx);
        let cfg = TrainConfig {
            l2_penalty: l2,
            intercept_init: fit_set.mean_target(),
            ..base_cfg.clone()
        };
        let params = spec.fit(&fit_set, &cfg)?;
        let mut err = 0.0;
        for &i in &held_idx {
            err += (predict(&params, train.row(i))? - train.target(i)).abs();
        }
        total += err / held_idx.len() as f64;
    }
    Ok(total / k as f64)
}

/// Selects the grid penalty with the lowest `k`-fold CV MAE. Ties go to the
/// larger penalty. Fold assignment is shared across the grid and seeded by
/// `base_cfg.seed`.
pub fn tune_l2_cv(
    train: &Dataset,
    grid: &[f64],
    k: usize,
    base_cfg: &TrainConfig,
    spec: &ModelSpec,
) -> Result<f64, ModelError> {
    if grid.is_empty() {
        return Err(ModelError::InvalidConfig("empty L2 grid".into()));
    }
    if k < 2 || train.len() < k {
        return Err(ModelError::InsufficientData { n: train.len(), k });
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let mut best: Option<(f64, f64)> = None;
    for &l2 in grid {
        let score = cv_mae(train, l2, k, base_cfg, spec)?;
        log::debug!("l2={l2} cv_mae={score}");
        best = match best {
            None => Some((score, l2)),
            Some((s, b)) if score < s || (score == s && l2 > b) => Some((score, l2)),
            keep => keep,
        };
    }
    Ok(best.expect("non-empty grid").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LrSchedule, Optimizer};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn base(seed: u64, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 8,
            l2_penalty: 0.0,
            schedule: LrSchedule::InverseScaling {
                eta0: 0.5,
                power: 0.25,
                horizon: epochs,
            },
            optimizer: Optimizer::Sgd,
            seed,
            intercept_init: 0.0,
        }
    }

    #[test]
    fn folds_are_balanced() {
        let f = cv_folds(23, 5, 1);
        for k in 0..5 {
            let c = f.iter().filter(|&&x| x == k).count();
            assert!(c == 4 || c == 5);
        }
    }

    #[test]
    fn singleton_grid() {
        let data = Dataset::new(vec![vec![1.0]; 6], vec![50.0; 6]).unwrap();
        assert_eq!(
            tune_l2_cv(&data, &[0.37], 5, &base(0, 2), &ModelSpec::Linear).unwrap(),
            0.37
        );
    }

    #[test]
    fn insufficient_data() {
        let data = Dataset::new(vec![vec![1.0]; 4], vec![50.0; 4]).unwrap();
        assert_eq!(
            tune_l2_cv(&data, &[0.0, 1.0], 5, &base(0, 2), &ModelSpec::Linear).unwrap_err(),
            ModelError::InsufficientData { n: 4, k: 5 }
        );
    }

    #[test]
    fn noiseless_data_prefers_no_penalty() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let ys = rows
            .iter()
            .map(|r| 40.0 + 30.0 * r[0] - 10.0 * r[1])
            .collect();
        let data = Dataset::new(rows, ys).unwrap();
        let chosen = tune_l2_cv(&data, &[0.0, 1e6], 5, &base(3, 100), &ModelSpec::Linear).unwrap();
        assert_eq!(chosen, 0.0);
    }
}
