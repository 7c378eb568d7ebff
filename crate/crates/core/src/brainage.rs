//! Predicted age difference (PAD) and its cross-validated age-bias
//! correction into BrainAGE.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{rng_for, stream};

#[derive(Debug, Error)]
pub enum BrainAgeError {
    #[error("degenerate bias fit: {0}")]
    DegenerateFit(String),
    #[error("insufficient records: {n} for {k}-fold correction")]
    InsufficientRecords { n: usize, k: usize },
    #[error("predictions csv {path}: {message}")]
    Csv { path: String, message: String },
}

/// One test subject's prediction. `pad` is always `predicted_age - actual_age`;
/// `brainage` is filled by [`correct_brainage_cv`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub subject_id: u64,
    pub actual_age: f64,
    pub predicted_age: f64,
    pub pad: f64,
    pub brainage: Option<f64>,
}

impl PredictionRecord {
    pub fn new(subject_id: u64, actual_age: f64, predicted_age: f64) -> Self {
        PredictionRecord {
            subject_id,
            actual_age,
            predicted_age,
            pad: compute_pad(predicted_age, actual_age),
            brainage: None,
        }
    }

    pub fn abs_error(&self) -> f64 {
        self.pad.abs()
    }
}

pub fn compute_pad(predicted: f64, actual: f64) -> f64 {
    predicted - actual
}

/// Least-squares line of PAD on age.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasLine {
    pub slope: f64,
    pub intercept: f64,
}

impl BiasLine {
    pub fn expected_pad(&self, age: f64) -> f64 {
        self.slope * age + self.intercept
    }
}

/// Closed-form two-parameter OLS of `pads` on `ages`.
pub fn fit_bias_line(pads: &[f64], ages: &[f64]) -> Result<BiasLine, BrainAgeError> {
    if pads.len() != ages.len() {
        return Err(BrainAgeError::DegenerateFit(format!(
            "{} pads vs {} ages",
            pads.len(),
            ages.len()
        )));
    }
    if pads.len() < 3 {
        return Err(BrainAgeError::DegenerateFit(format!(
            "{} points, need at least 3",
            pads.len()
        )));
    }
    let n = ages.len() as f64;
    let mean_a = ages.iter().sum::<f64>() / n;
    let mean_p = pads.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (a, p) in ages.iter().zip(pads) {
        sxx += (a - mean_a) * (a - mean_a);
        sxy += (a - mean_a) * (p - mean_p);
    }
    if !(sxx > 0.0) {
        return Err(BrainAgeError::DegenerateFit("zero age variance".into()));
    }
    let slope = sxy / sxx;
    Ok(BiasLine {
        slope,
        intercept: mean_p - slope * mean_a,
    })
}

/// Fold index per record: seeded shuffle dealt round-robin.
pub fn correction_folds(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[stream::CORRECTION_FOLDS]));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

/// Corrected records together with the fold layout and per-fold lines.
#[derive(Clone, Debug)]
pub struct Correction {
    pub records: Vec<PredictionRecord>,
    pub fold_of: Vec<usize>,
    pub lines: Vec<BiasLine>,
}

pub fn correct_brainage_cv_detailed(
    records: &[PredictionRecord],
    k: usize,
    seed: u64,
) -> Result<Correction, BrainAgeError> {
    let n = records.len();
    if k < 2 || n < k || n - n.div_ceil(k) < 3 {
        return Err(BrainAgeError::InsufficientRecords { n, k });
    }
    let fold_of = correction_folds(n, k, seed);
    let mut out = records.to_vec();
    let mut lines = Vec::with_capacity(k);
    for f in 0..k {
        let (pads, ages): (Vec<f64>, Vec<f64>) = records
            .iter()
            .zip(&fold_of)
            .filter(|(_, &fo)| fo != f)
            .map(|(r, _)| (r.pad, r.actual_age))
            .unzip();
        let line = fit_bias_line(&pads, &ages)?;
        for (rec, _) in out.iter_mut().zip(&fold_of).filter(|(_, &fo)| fo == f) {
            rec.brainage = Some(rec.pad - line.expected_pad(rec.actual_age));
        }
        lines.push(line);
    }
    Ok(Correction {
        records: out,
        fold_of,
        lines,
    })
}

/// BrainAGE by `k`-fold cross-validated bias correction: each held-out
/// record's PAD minus the line fitted on the other folds.
pub fn correct_brainage_cv(
    records: &[PredictionRecord],
    k: usize,
    seed: u64,
) -> Result<Vec<PredictionRecord>, BrainAgeError> {
    correct_brainage_cv_detailed(records, k, seed).map(|c| c.records)
}

#[derive(Serialize, Deserialize)]
struct PredictionRow {
    subject_id: u64,
    actual_age: f64,
    predicted_age: f64,
    pad: f64,
    brainage: Option<f64>,
}

/// Writes `subject_id,actual_age,predicted_age,pad,brainage`.
pub fn write_predictions_csv(
    path: &Path,
    records: &[PredictionRecord],
) -> Result<(), BrainAgeError> {
    let err = |e: csv::Error| BrainAgeError::Csv {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in records {
        w.serialize(PredictionRow {
            subject_id: r.subject_id,
            actual_age: r.actual_age,
            predicted_age: r.predicted_age,
            pad: r.pad,
            brainage: r.brainage,
        })
        .map_err(err)?;
    }
    w.flush().map_err(|e| BrainAgeError::Csv {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<PredictionRecord>, BrainAgeError> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| BrainAgeError::Csv {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, row) in rd.deserialize::<PredictionRow>().enumerate() {
        let row = row.map_err(|e| BrainAgeError::Csv {
            path: path.display().to_string(),
            message: format!("row {}: {e}", i + 1),
        })?;
        out.push(PredictionRecord {
            subject_id: row.subject_id,
            actual_age: row.actual_age,
            predicted_age: row.predicted_age,
            pad: row.pad,
            brainage: row.brainage,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pad_sign_convention() {
        assert_eq!(compute_pad(75.0, 70.0), 5.0);
        assert_eq!(compute_pad(70.0, 70.0), 0.0);
        assert_eq!(compute_pad(60.0, 72.0), -12.0);
        assert_eq!(PredictionRecord::new(1, 72.0, 60.0).pad, -12.0);
    }

    #[test]
    fn bias_line_examples() {
        let ages = [40.0, 55.0, 63.0, 80.0];
        let zero = fit_bias_line(&[0.0; 4], &ages).unwrap();
        assert_eq!(
            zero,
            BiasLine {
                slope: 0.0,
                intercept: 0.0
            }
        );
        let pads: Vec<f64> = ages.iter().map(|a| -0.5 * a + 40.0).collect();
        let line = fit_bias_line(&pads, &ages).unwrap();
        assert!((line.slope + 0.5).abs() < 1e-12);
        assert!((line.intercept - 40.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_fits() {
        assert!(fit_bias_line(&[1.0, 2.0, 3.0], &[70.0; 3]).is_err());
        assert!(fit_bias_line(&[1.0, 2.0], &[60.0, 70.0]).is_err());
    }

    fn records_from(ages: &[f64], pad: impl Fn(f64) -> f64) -> Vec<PredictionRecord> {
        ages.iter()
            .enumerate()
            .map(|(i, &a)| PredictionRecord::new(i as u64, a, a + pad(a)))
            .collect()
    }

    #[test]
    fn perfect_predictions_stay_zero() {
        let ages: Vec<f64> = (0..50).map(|i| 30.0 + i as f64).collect();
        let out = correct_brainage_cv(&records_from(&ages, |_| 0.0), 10, 1).unwrap();
        assert!(out.iter().all(|r| r.brainage == Some(0.0)));
    }

    #[test]
    fn exact_linear_pad_is_removed() {
        let ages: Vec<f64> = (0..500).map(|i| 20.0 + (i as f64 * 0.157) % 80.0).collect();
        let out = correct_brainage_cv(&records_from(&ages, |a| 30.0 - 0.4 * a), 10, 7).unwrap();
        for r in &out {
            assert!(r.brainage.unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn difference_is_affine_within_each_fold() {
        let ages: Vec<f64> = (0..200).map(|i| 20.0 + (i * 37 % 80) as f64).collect();
        let recs = records_from(&ages, |a| ((a * 1.7).sin() * 4.0) - 0.3 * (a - 70.0));
        let c = correct_brainage_cv_detailed(&recs, 10, 3).unwrap();
        for (r, &f) in c.records.iter().zip(&c.fold_of) {
            let diff = r.brainage.unwrap() - r.pad;
            assert!((diff + c.lines[f].expected_pad(r.actual_age)).abs() < 1e-9);
        }
    }

    #[test]
    fn insufficient_records() {
        let recs = records_from(&[50.0, 60.0, 70.0], |_| 1.0);
        assert!(matches!(
            correct_brainage_cv(&recs, 10, 0),
            Err(BrainAgeError::InsufficientRecords { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let mut recs = records_from(&[50.1, 60.25, 71.0 / 3.0], |a| a * 0.01);
        recs[1].brainage = Some(-0.1 / 3.0);
        write_predictions_csv(&path, &recs).unwrap();
        assert_eq!(read_predictions_csv(&path).unwrap(), recs);
    }
}
