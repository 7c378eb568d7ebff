//! Subjects, synthetic multi-site cohorts and the data plumbing around them.

mod folds;
mod generate;
mod io;
mod normalize;
mod spec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use folds::{stratified_center_kfold, FoldAssignment};
pub use generate::{generate_cohort, generate_cohort_detailed, LatentState};
pub use io::{load_cohort_csv, write_cohort_csv, CLINICAL_COLUMNS};
pub use normalize::{apply_minmax, fit_minmax, NormStats};
pub use spec::{
    AgeDistribution, CohortSpec, OutcomeModel, PhenotypeOffsets, Prevalence, SiteEffectSpec,
    TABLE1_CENTER_SIZES,
};

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("invalid cohort spec: {0}")]
    InvalidSpec(String),
    #[error("invalid fold count k = {0}; need k >= 2")]
    InvalidK(usize),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: cannot parse `{column}` from {value:?}")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: {message}")]
    Invariant { row: usize, message: String },
    #[error("csv error: {0}")]
    Csv(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// One synthetic (or ingested) patient.
///
/// `features` holds the raw measurements: the volume block first (in
/// millilitres, divided by `icv` before use) followed by the radiomic block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: u64,
    pub center_id: u32,
    pub age: f64,
    /// 1 = male.
    pub sex: bool,
    pub htn: bool,
    pub dm: bool,
    pub af: bool,
    pub smk: bool,
    pub hcl: bool,
    pub nihss: u32,
    /// MRI-to-puncture delay in minutes.
    pub p2p: f64,
    pub ivt: bool,
    pub reca: bool,
    pub mrs_3m: u8,
    /// Total intracranial volume, same unit as the volume block.
    pub icv: f64,
    pub features: Vec<f64>,
}

impl SubjectRecord {
    /// Good functional outcome: mRS at three months of at most 2.
    pub fn good_outcome(&self) -> bool {
        self.mrs_3m <= 2
    }

    pub(crate) fn check(&self) -> Result<(), String> {
        if !(self.age.is_finite() && (18.0..=100.0).contains(&self.age)) {
            return Err(format!("age {} outside [18, 100]", self.age));
        }
        if self.mrs_3m > 6 {
            return Err(format!("mrs_3m {} outside 0..=6", self.mrs_3m));
        }
        if !(self.p2p.is_finite() && self.p2p >= 0.0) {
            return Err(format!("p2p {} must be finite and non-negative", self.p2p));
        }
        if !(self.icv.is_finite() && self.icv > 0.0) {
            return Err(format!("icv {} must be positive", self.icv));
        }
        if let Some(f) = self.features.iter().find(|f| !f.is_finite()) {
            return Err(format!("non-finite feature {f}"));
        }
        Ok(())
    }
}

/// A set of subjects sharing one feature layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub subjects: Vec<SubjectRecord>,
    /// Length of the volume block at the front of every feature vector.
    pub n_volume_features: usize,
}

impl Cohort {
    pub fn feature_dim(&self) -> usize {
        self.subjects
            .first()
            .map_or(self.n_volume_features, |s| s.features.len())
    }

    pub fn n_radiomic_features(&self) -> usize {
        self.feature_dim().saturating_sub(self.n_volume_features)
    }

    /// Volume block divided by the subject's total intracranial volume.
    pub fn volume_features(&self, s: &SubjectRecord) -> Vec<f64> {
        s.features[..self.n_volume_features]
            .iter()
            .map(|v| v / s.icv)
            .collect()
    }

    pub fn radiomic_features<'a>(&self, s: &'a SubjectRecord) -> &'a [f64] {
        &s.features[self.n_volume_features..]
    }

    /// Center ids in ascending order.
    pub fn center_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.subjects.iter().map(|s| s.center_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn center_size(&self, center: u32) -> usize {
        self.subjects
            .iter()
            .filter(|s| s.center_id == center)
            .count()
    }

    /// The center with the most subjects; ties go to the lowest id.
    pub fn largest_center(&self) -> Option<u32> {
        self.center_ids()
            .into_iter()
            .map(|c| (self.center_size(c), std::cmp::Reverse(c)))
            .max()
            .map(|(_, std::cmp::Reverse(c))| c)
    }
}
