use serde::{Deserialize, Serialize};

use super::CohortError;

/// Participants per center in the reference multicenter cohort (1674 total).
pub const TABLE1_CENTER_SIZES: [usize; 16] = [
    651, 184, 135, 84, 83, 82, 79, 66, 63, 62, 46, 44, 32, 30, 23, 10,
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgeDistribution {
    pub mean: f64,
    pub sd: f64,
}

impl Default for AgeDistribution {
    fn default() -> Self {
        AgeDistribution {
            mean: 70.03,
            sd: 14.71,
        }
    }
}

/// Per-center affine distortion of measured features. Scales are drawn from
/// `LogNormal(0, scale_sd)`; shifts from `Normal(0, shift_sd · feature sd)`.
/// Every feature of a center is additionally multiplied by one shared gain
/// drawn from `LogNormal(0, common_scale_sd)`. All zeros gives the identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SiteEffectSpec {
    pub volume_scale_sd: f64,
    pub volume_shift_sd: f64,
    pub radiomic_scale_sd: f64,
    pub radiomic_shift_sd: f64,
    pub common_scale_sd: f64,
}

impl SiteEffectSpec {
    pub fn identity() -> Self {
        SiteEffectSpec {
            volume_scale_sd: 0.0,
            volume_shift_sd: 0.0,
            radiomic_scale_sd: 0.0,
            radiomic_shift_sd: 0.0,
            common_scale_sd: 0.0,
        }
    }
}

impl Default for SiteEffectSpec {
    fn default() -> Self {
        SiteEffectSpec {
            volume_scale_sd: 0.1,
            volume_shift_sd: 0.1,
            radiomic_scale_sd: 0.1,
            radiomic_shift_sd: 0.1,
            common_scale_sd: 0.2,
        }
    }
}

/// Years added to the latent brain age for subjects with each phenotype.
/// Diabetes has its own knob, [`CohortSpec::dm_feature_offset`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhenotypeOffsets {
    pub sex: f64,
    pub htn: f64,
    pub af: f64,
    pub smk: f64,
    pub hcl: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Prevalence {
    pub sex: f64,
    pub htn: f64,
    pub dm: f64,
    pub af: f64,
    pub smk: f64,
    pub hcl: f64,
    pub ivt: f64,
    pub reca: f64,
}

impl Default for Prevalence {
    fn default() -> Self {
        Prevalence {
            sex: 0.46,
            htn: 0.68,
            dm: 0.21,
            af: 0.37,
            smk: 0.17,
            hcl: 0.41,
            ivt: 0.62,
            reca: 0.83,
        }
    }
}

/// Log-odds of a good outcome (mRS ≤ 2). Continuous covariates enter
/// centered: age at 70 years, NIHSS at 16, P2P at 148 minutes.
/// `brain_age_gap` multiplies the latent brain age minus chronological age.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutcomeModel {
    pub intercept: f64,
    pub age: f64,
    pub nihss: f64,
    pub p2p: f64,
    pub sex: f64,
    pub htn: f64,
    pub dm: f64,
    pub af: f64,
    pub smk: f64,
    pub hcl: f64,
    pub ivt: f64,
    pub reca: f64,
    pub brain_age_gap: f64,
}

impl Default for OutcomeModel {
    fn default() -> Self {
        OutcomeModel {
            intercept: -1.6,
            age: -0.045,
            nihss: -0.1,
            p2p: -0.005,
            sex: 0.2,
            htn: 0.0,
            dm: -0.15,
            af: 0.0,
            smk: 0.0,
            hcl: 0.0,
            ivt: 0.4,
            reca: 1.5,
            brain_age_gap: -0.08,
        }
    }
}

impl OutcomeModel {
    /// No association between brain aging and outcome.
    pub fn without_brain_effect(mut self) -> Self {
        self.brain_age_gap = 0.0;
        self
    }
}

/// Recipe for a synthetic cohort. Every field has a default, so `{}` is a
/// valid JSON document yielding the 16-center, 1674-subject layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortSpec {
    pub seed: u64,
    pub subjects_per_center: Vec<usize>,
    pub age_distribution: AgeDistribution,
    /// Optional per-center override, one entry per center.
    pub center_age_distributions: Vec<AgeDistribution>,
    pub n_volume_features: usize,
    pub n_radiomic_features: usize,
    /// SD (years) of the latent brain-age deviation not explained by phenotypes.
    pub latent_noise_sd: f64,
    /// Relative (log-scale) measurement noise on volumes.
    pub volume_noise_sd: f64,
    /// Additive measurement noise on radiomic features.
    pub radiomic_noise_sd: f64,
    pub site_effect: SiteEffectSpec,
    /// Years added to the latent brain age of diabetic subjects.
    pub dm_feature_offset: f64,
    pub phenotype_offsets: PhenotypeOffsets,
    pub prevalence: Prevalence,
    pub nihss_mean: f64,
    pub nihss_sd: f64,
    pub p2p_mean: f64,
    pub p2p_sd: f64,
    pub outcome_model: OutcomeModel,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            seed: 0,
            subjects_per_center: TABLE1_CENTER_SIZES.to_vec(),
            age_distribution: AgeDistribution::default(),
            center_age_distributions: Vec::new(),
            n_volume_features: 32,
            n_radiomic_features: 256,
            latent_noise_sd: 4.0,
            volume_noise_sd: 0.05,
            radiomic_noise_sd: 0.5,
            site_effect: SiteEffectSpec::default(),
            dm_feature_offset: 4.0,
            phenotype_offsets: PhenotypeOffsets::default(),
            prevalence: Prevalence::default(),
            nihss_mean: 16.0,
            nihss_sd: 7.0,
            p2p_mean: 148.0,
            p2p_sd: 40.0,
            outcome_model: OutcomeModel::default(),
        }
    }
}

impl CohortSpec {
    pub fn n_centers(&self) -> usize {
        self.subjects_per_center.len()
    }

    pub fn total_subjects(&self) -> usize {
        self.subjects_per_center.iter().sum()
    }

    pub fn age_for_center(&self, c: usize) -> AgeDistribution {
        self.center_age_distributions
            .get(c)
            .copied()
            .unwrap_or(self.age_distribution)
    }

    /// No planted phenotype or outcome effects on brain aging.
    pub fn null_effects(mut self) -> Self {
        self.dm_feature_offset = 0.0;
        self.phenotype_offsets = PhenotypeOffsets::default();
        self.outcome_model = self.outcome_model.without_brain_effect();
        self
    }

    pub fn validate(&self) -> Result<(), CohortError> {
        let bad = |m: String| Err(CohortError::InvalidSpec(m));
        if self.subjects_per_center.is_empty() || self.subjects_per_center.contains(&0) {
            return bad("every center needs at least one subject".into());
        }
        if !self.center_age_distributions.is_empty()
            && self.center_age_distributions.len() != self.n_centers()
        {
            return bad("center_age_distributions must list every center".into());
        }
        for a in std::iter::once(&self.age_distribution).chain(&self.center_age_distributions) {
            if !(a.sd >= 0.0 && (18.0..=100.0).contains(&a.mean)) {
                return bad(format!("bad age distribution {a:?}"));
            }
        }
        if self.n_volume_features == 0 {
            return bad("need at least one volume feature".into());
        }
        let sds = [
            self.latent_noise_sd,
            self.volume_noise_sd,
            self.radiomic_noise_sd,
            self.nihss_sd,
            self.p2p_sd,
            self.site_effect.volume_scale_sd,
            self.site_effect.volume_shift_sd,
            self.site_effect.radiomic_scale_sd,
            self.site_effect.radiomic_shift_sd,
            self.site_effect.common_scale_sd,
        ];
        if sds.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("standard deviations must be finite and non-negative".into());
        }
        let p = self.prevalence;
        for v in [p.sex, p.htn, p.dm, p.af, p.smk, p.hcl, p.ivt, p.reca] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("prevalence {v} outside [0, 1]"));
            }
        }
        if !self.dm_feature_offset.is_finite() {
            return bad("dm_feature_offset must be finite".into());
        }
        Ok(())
    }
}
