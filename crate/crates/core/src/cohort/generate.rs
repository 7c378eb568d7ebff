//! Synthetic cohort generator.
//!
//! Every subject carries a latent brain age `b`. The volume block is a set of
//! smooth log-linear/quadratic fractions of total intracranial volume driven
//! by `b`; the radiomic block is a bank of saturating and quadratic responses
//! to `b`. Each center then distorts every feature with its own affine map.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use super::{Cohort, CohortError, CohortSpec, SubjectRecord};
use crate::rng::{rng_for, stream};

/// mRS is the number of cut points below `u - eta`, with `u` standard
/// logistic; the cut at index 2 sits at zero so `mRS <= 2` has probability
/// `sigmoid(eta)`.
const MRS_CUTS: [f64; 6] = [-2.5, -1.2, 0.0, 1.0, 2.2, 3.5];

const AGE_CENTER: f64 = 70.0;
const AGE_SCALE: f64 = 15.0;

/// Latent quantities behind a generated cohort, indexed like `Cohort::subjects`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    pub brain_age: Vec<f64>,
    /// Log-odds of a good outcome.
    pub outcome_logit: Vec<f64>,
}

struct FeatureMap {
    vol_base: Vec<f64>,
    vol_slope: Vec<f64>,
    vol_curve: Vec<f64>,
    vol_noise: Vec<f64>,
    rad_level: Vec<f64>,
    rad_amp: Vec<f64>,
    rad_rate: Vec<f64>,
    rad_offset: Vec<f64>,
    rad_curve: Vec<f64>,
}

impl FeatureMap {
    fn draw(spec: &CohortSpec) -> Self {
        let mut rng = rng_for(spec.seed, &[stream::FEATURE_MAP]);
        let nv = spec.n_volume_features;
        let nr = spec.n_radiomic_features;
        let mut m = FeatureMap {
            vol_base: Vec::with_capacity(nv),
            vol_slope: Vec::with_capacity(nv),
            vol_curve: Vec::with_capacity(nv),
            vol_noise: Vec::with_capacity(nv),
            rad_level: Vec::with_capacity(nr),
            rad_amp: Vec::with_capacity(nr),
            rad_rate: Vec::with_capacity(nr),
            rad_offset: Vec::with_capacity(nr),
            rad_curve: Vec::with_capacity(nr),
        };
        for j in 0..nv {
            // Feature 0 behaves like ventricular volume: a clean, strongly
            // increasing function of brain age.
            let (slope, noise) = if j == 0 {
                (0.5, 0.3)
            } else {
                let sign = if rng.random::<f64>() < 0.7 { -1.0 } else { 1.0 };
                (
                    sign * rng.random_range(0.03..0.3),
                    rng.random_range(0.5..1.5),
                )
            };
            m.vol_base.push(10f64.powf(rng.random_range(-3.0..-1.0)));
            m.vol_slope.push(slope);
            m.vol_curve.push(rng.random_range(-0.03..0.03));
            m.vol_noise.push(noise);
        }
        for _ in 0..nr {
            // Intensity-like features sit well away from zero, so a per-site
            // gain moves them by a sizeable fraction of their spread.
            m.rad_level.push(rng.random_range(2.0..6.0));
            let amp: f64 = rng.random_range(0.5..2.0);
            m.rad_amp
                .push(if rng.random::<bool>() { amp } else { -amp });
            m.rad_rate.push(rng.random_range(0.3..1.2));
            m.rad_offset.push(rng.random_range(-1.0..1.0));
            m.rad_curve.push(rng.random_range(-0.2..0.2));
        }
        m
    }

    fn volume_fraction(&self, j: usize, z: f64, noise: f64) -> f64 {
        self.vol_base[j] * (self.vol_slope[j] * z + self.vol_curve[j] * z * z + noise).exp()
    }

    fn radiomic(&self, k: usize, z: f64) -> f64 {
        self.rad_level[k]
            + self.rad_amp[k] * (self.rad_rate[k] * z + self.rad_offset[k]).tanh()
            + self.rad_curve[k] * z * z
    }
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("validated standard deviation")
}

fn truncated_age(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return mean;
    }
    let d = normal(mean, sd);
    loop {
        let a = d.sample(rng);
        if (18.0..=100.0).contains(&a) {
            return a;
        }
    }
}

fn standard_logistic(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    (u / (1.0 - u)).ln()
}

fn sd_of(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn generate_cohort(spec: &CohortSpec) -> Result<Cohort, CohortError> {
    generate_cohort_detailed(spec).map(|(c, _)| c)
}

/// Generates the cohort and also returns the latent state that produced it.
/// Centers are numbered from 1 in the order of `subjects_per_center`;
/// subject ids run from 1 across the whole cohort.
pub fn generate_cohort_detailed(spec: &CohortSpec) -> Result<(Cohort, LatentState), CohortError> {
    spec.validate()?;
    let map = FeatureMap::draw(spec);
    let nv = spec.n_volume_features;
    let nr = spec.n_radiomic_features;
    let p = spec.prevalence;
    let off = spec.phenotype_offsets;
    let om = spec.outcome_model;

    let n = spec.total_subjects();
    let mut subjects = Vec::with_capacity(n);
    let mut latent = LatentState {
        brain_age: Vec::with_capacity(n),
        outcome_logit: Vec::with_capacity(n),
    };
    let mut clean: Vec<Vec<f64>> = Vec::with_capacity(n);

    let mut next_id = 1u64;
    for (c, &size) in spec.subjects_per_center.iter().enumerate() {
        let age_dist = spec.age_for_center(c);
        for _ in 0..size {
            let id = next_id;
            next_id += 1;
            let mut rng = rng_for(spec.seed, &[stream::SUBJECT, id]);
            let age = truncated_age(&mut rng, age_dist.mean, age_dist.sd);
            let mut flag = |prob: f64| rng.random::<f64>() < prob;
            let (sex, htn, dm, af, smk, hcl, ivt, reca) = (
                flag(p.sex),
                flag(p.htn),
                flag(p.dm),
                flag(p.af),
                flag(p.smk),
                flag(p.hcl),
                flag(p.ivt),
                flag(p.reca),
            );
            let nihss = normal(spec.nihss_mean, spec.nihss_sd)
                .sample(&mut rng)
                .round()
                .clamp(0.0, 42.0) as u32;
            let p2p = normal(spec.p2p_mean, spec.p2p_sd)
                .sample(&mut rng)
                .max(10.0);
            let icv = normal(1450.0 + if sex { 120.0 } else { 0.0 }, 110.0)
                .sample(&mut rng)
                .max(900.0);

            let f = |b: bool| if b { 1.0 } else { 0.0 };
            let brain_age = age
                + f(dm) * spec.dm_feature_offset
                + f(sex) * off.sex
                + f(htn) * off.htn
                + f(af) * off.af
                + f(smk) * off.smk
                + f(hcl) * off.hcl
                + normal(0.0, spec.latent_noise_sd).sample(&mut rng);

            let eta = om.intercept
                + om.age * (age - AGE_CENTER)
                + om.nihss * (nihss as f64 - 16.0)
                + om.p2p * (p2p - 148.0)
                + om.sex * f(sex)
                + om.htn * f(htn)
                + om.dm * f(dm)
                + om.af * f(af)
                + om.smk * f(smk)
                + om.hcl * f(hcl)
                + om.ivt * f(ivt)
                + om.reca * f(reca)
                + om.brain_age_gap * (brain_age - age);
            let s = standard_logistic(&mut rng) - eta;
            let mrs_3m = MRS_CUTS.iter().filter(|&&cut| cut < s).count() as u8;

            let z = (brain_age - AGE_CENTER) / AGE_SCALE;
            let mut row = Vec::with_capacity(nv + nr);
            for j in 0..nv {
                let e = normal(0.0, spec.volume_noise_sd * map.vol_noise[j]).sample(&mut rng);
                row.push(map.volume_fraction(j, z, e));
            }
            let rad_noise = normal(0.0, spec.radiomic_noise_sd);
            for k in 0..nr {
                row.push(map.radiomic(k, z) + rad_noise.sample(&mut rng));
            }

            clean.push(row);
            latent.brain_age.push(brain_age);
            latent.outcome_logit.push(eta);
            subjects.push(SubjectRecord {
                subject_id: id,
                center_id: (c + 1) as u32,
                age,
                sex,
                htn,
                dm,
                af,
                smk,
                hcl,
                nihss,
                p2p,
                ivt,
                reca,
                mrs_3m,
                icv,
                features: Vec::new(),
            });
        }
    }

    let feature_sd: Vec<f64> = (0..nv + nr)
        .map(|j| sd_of(clean.iter().map(|r| r[j])))
        .collect();
    let se = spec.site_effect;
    let mut site_maps = Vec::with_capacity(spec.n_centers());
    for c in 0..spec.n_centers() {
        let mut rng = rng_for(spec.seed, &[stream::SITE_EFFECT, (c + 1) as u64]);
        let vol_scale = LogNormal::new(0.0, se.volume_scale_sd).expect("validated");
        let rad_scale = LogNormal::new(0.0, se.radiomic_scale_sd).expect("validated");
        let gain = LogNormal::new(0.0, se.common_scale_sd)
            .expect("validated")
            .sample(&mut rng);
        let affine: Vec<(f64, f64)> = (0..nv + nr)
            .map(|j| {
                let (scale, shift_sd) = if j < nv {
                    (&vol_scale, se.volume_shift_sd)
                } else {
                    (&rad_scale, se.radiomic_shift_sd)
                };
                let a = scale.sample(&mut rng) * gain;
                let b = normal(0.0, shift_sd * feature_sd[j]).sample(&mut rng);
                (a, b)
            })
            .collect();
        site_maps.push(affine);
    }

    for (s, row) in subjects.iter_mut().zip(clean) {
        let affine = &site_maps[(s.center_id - 1) as usize];
        s.features = row
            .into_iter()
            .zip(affine)
            .enumerate()
            .map(|(j, (x, &(a, b)))| {
                let y = a * x + b;
                if j < nv {
                    // Measured fractions stay positive; store absolute volume.
                    y.max(1e-6 * map.vol_base[j]) * s.icv
                } else {
                    y
                }
            })
            .collect();
    }

    Ok((
        Cohort {
            subjects,
            n_volume_features: nv,
        },
        latent,
    ))
}
