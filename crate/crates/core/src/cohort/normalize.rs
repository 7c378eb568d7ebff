use serde::{Deserialize, Serialize};

/// Per-feature minimum and maximum over a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Maps one row through `(x - min) / (max - min)`. Constant features map
    /// to 0. Values outside the training range are not clipped.
    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&x, (&lo, &hi))| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 })
            .collect()
    }
}

/// # Panics
/// If `train` is empty or rows differ in length.
pub fn fit_minmax(train: &[Vec<f64>]) -> NormStats {
    let first = train
        .first()
        .expect("min-max needs at least one training row");
    let mut min = first.clone();
    let mut max = first.clone();
    for row in &train[1..] {
        assert_eq!(row.len(), min.len(), "ragged training rows");
        for (j, &x) in row.iter().enumerate() {
            min[j] = min[j].min(x);
            max[j] = max[j].max(x);
        }
    }
    NormStats { min, max }
}

pub fn apply_minmax(stats: &NormStats, features: &[Vec<f64>]) -> Vec<Vec<f64>> {
    features.iter().map(|r| stats.apply_row(r)).collect()
}
