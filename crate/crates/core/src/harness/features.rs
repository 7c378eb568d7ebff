use crate::cohort::{fit_minmax, Cohort, NormStats, SubjectRecord};
use crate::model::{expand_polynomial, Dataset, ModelError};

use super::ModelFamily;

/// Feature extraction for one model family: the family's raw block, min-max
/// scaled with training statistics, expanded to degree 2 for
/// `vol_augmented`.
#[derive(Clone, Debug)]
pub struct FeaturePipeline {
    pub family: ModelFamily,
    pub norm: NormStats,
}

pub fn raw_features(cohort: &Cohort, s: &SubjectRecord, family: ModelFamily) -> Vec<f64> {
    match family {
        ModelFamily::RadiomicsLike => cohort.radiomic_features(s).to_vec(),
        _ => cohort.volume_features(s),
    }
}

impl FeaturePipeline {
    pub fn fit(
        cohort: &Cohort,
        train: &[&SubjectRecord],
        family: ModelFamily,
    ) -> Result<Self, ModelError> {
        if train.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        let rows: Vec<Vec<f64>> = train
            .iter()
            .map(|s| raw_features(cohort, s, family))
            .collect();
        if rows[0].is_empty() {
            return Err(ModelError::InvalidData(format!(
                "cohort has no features for {family}"
            )));
        }
        Ok(FeaturePipeline {
            family,
            norm: fit_minmax(&rows),
        })
    }

    pub fn transform(&self, cohort: &Cohort, s: &SubjectRecord) -> Vec<f64> {
        let scaled = self.norm.apply_row(&raw_features(cohort, s, self.family));
        match self.family {
            ModelFamily::VolAugmented => {
                expand_polynomial(&scaled, 2).expect("degree 2 is supported")
            }
            _ => scaled,
        }
    }

    pub fn dataset(
        &self,
        cohort: &Cohort,
        subjects: &[&SubjectRecord],
    ) -> Result<Dataset, ModelError> {
        Dataset::new(
            subjects.iter().map(|s| self.transform(cohort, s)).collect(),
            subjects.iter().map(|s| s.age).collect(),
        )
    }
}
