//! Statistical analysis of predictions: paired error comparisons, BrainAGE
//! by phenotype and by functional outcome, and the outcome logistic model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::brainage::PredictionRecord;
use crate::cohort::{Cohort, SubjectRecord};
use crate::error::{Error, Result};
use crate::stats::{
    chi2_independence, kruskal_wallis, mann_whitney_u, odds_ratio_table, wilcoxon_signed_rank,
    LogisticFit, OddsRatioRow, StatResult, StatsError, INTERCEPT,
};

/// Outcome of a paired Wilcoxon comparison. Identical error sets have no
/// non-zero difference to rank and report `NoDifference`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ErrorComparison {
    Tested(StatResult),
    NoDifference { n: usize },
}

impl ErrorComparison {
    pub fn p_value(&self) -> f64 {
        match self {
            ErrorComparison::Tested(r) => r.p_value,
            ErrorComparison::NoDifference { .. } => 1.0,
        }
    }
}

/// `|error of a| - |error of b|` for every subject, in subject-id order.
pub fn paired_error_differences(
    a: &[PredictionRecord],
    b: &[PredictionRecord],
) -> Result<Vec<f64>> {
    let index = |rs: &[PredictionRecord]| -> Result<BTreeMap<u64, f64>> {
        let mut m = BTreeMap::new();
        for r in rs {
            if m.insert(r.subject_id, r.abs_error()).is_some() {
                return Err(Error::Pairing(format!(
                    "subject {} appears twice",
                    r.subject_id
                )));
            }
        }
        Ok(m)
    };
    let (ia, ib) = (index(a)?, index(b)?);
    if ia.len() != ib.len() || ia.keys().zip(ib.keys()).any(|(x, y)| x != y) {
        let missing = ia
            .keys()
            .find(|k| !ib.contains_key(k))
            .or_else(|| ib.keys().find(|k| !ia.contains_key(k)));
        return Err(Error::Pairing(format!(
            "prediction sets differ ({} vs {} subjects; first unmatched id {:?})",
            ia.len(),
            ib.len(),
            missing
        )));
    }
    Ok(ia.values().zip(ib.values()).map(|(x, y)| x - y).collect())
}

/// Two-tailed Wilcoxon signed-rank test on paired differences.
pub fn compare_error_differences(diffs: &[f64]) -> Result<ErrorComparison> {
    match wilcoxon_signed_rank(diffs) {
        Ok(r) => Ok(ErrorComparison::Tested(r)),
        Err(StatsError::Degenerate(_)) => Ok(ErrorComparison::NoDifference { n: diffs.len() }),
        Err(e) => Err(e.into()),
    }
}

/// Paired comparison of the absolute errors of two configurations on the
/// same subjects. Direction is negative when `a` has the smaller errors.
pub fn compare_errors(a: &[PredictionRecord], b: &[PredictionRecord]) -> Result<ErrorComparison> {
    compare_error_differences(&paired_error_differences(a, b)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl ErrorSummary {
    pub fn of(records: &[PredictionRecord]) -> Self {
        let errs: Vec<f64> = records.iter().map(PredictionRecord::abs_error).collect();
        let (mean, sd) = mean_sd(&errs);
        ErrorSummary {
            n: errs.len(),
            mean,
            sd,
        }
    }
}

pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub const PHENOTYPES: [&str; 6] = ["sex", "htn", "dm", "af", "smk", "hcl"];

pub fn phenotype_flag(s: &SubjectRecord, name: &str) -> Option<bool> {
    Some(match name {
        "sex" => s.sex,
        "htn" => s.htn,
        "dm" => s.dm,
        "af" => s.af,
        "smk" => s.smk,
        "hcl" => s.hcl,
        "ivt" => s.ivt,
        "reca" => s.reca,
        _ => return None,
    })
}

/// Mann-Whitney comparison of one variable between subjects with and
/// without a phenotype. `result` is `None` (with a note) when a group is
/// empty or the test is degenerate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub grouping: String,
    pub variable: String,
    pub n_present: usize,
    pub n_absent: usize,
    pub median_present: f64,
    pub median_absent: f64,
    pub result: Option<StatResult>,
    pub note: String,
}

fn compare_groups(
    grouping: &str,
    variable: &str,
    present: &[f64],
    absent: &[f64],
) -> GroupComparison {
    let (result, note) = if present.is_empty() || absent.is_empty() {
        log::info!("skipping {variable} by {grouping}: empty group");
        (None, "skipped: empty group".to_string())
    } else {
        match mann_whitney_u(present, absent) {
            Ok(r) => (Some(r), String::new()),
            Err(e) => (None, format!("skipped: {e}")),
        }
    };
    GroupComparison {
        grouping: grouping.to_string(),
        variable: variable.to_string(),
        n_present: present.len(),
        n_absent: absent.len(),
        median_present: median(present),
        median_absent: median(absent),
        result,
        note,
    }
}

fn joined<'a>(
    records: &'a [PredictionRecord],
    cohort: &'a Cohort,
) -> Result<Vec<(&'a PredictionRecord, &'a SubjectRecord, f64)>> {
    let index: BTreeMap<u64, &SubjectRecord> =
        cohort.subjects.iter().map(|s| (s.subject_id, s)).collect();
    records
        .iter()
        .map(|r| {
            let s = index
                .get(&r.subject_id)
                .ok_or_else(|| Error::Pairing(format!("subject {} not in cohort", r.subject_id)))?;
            let b = r.brainage.ok_or_else(|| {
                Error::Pairing(format!("subject {} has no BrainAGE", r.subject_id))
            })?;
            Ok((r, *s, b))
        })
        .collect()
}

/// BrainAGE and chronological age compared between subjects with and
/// without each phenotype (male vs female for `sex`).
pub fn phenotype_analysis(
    records: &[PredictionRecord],
    cohort: &Cohort,
) -> Result<Vec<GroupComparison>> {
    let rows = joined(records, cohort)?;
    let mut out = Vec::new();
    for variable in ["brainage", "age"] {
        for name in PHENOTYPES {
            let (mut present, mut absent) = (Vec::new(), Vec::new());
            for (_, s, b) in &rows {
                let v = if variable == "brainage" { *b } else { s.age };
                if phenotype_flag(s, name).expect("known phenotype") {
                    present.push(v);
                } else {
                    absent.push(v);
                }
            }
            out.push(compare_groups(name, variable, &present, &absent));
        }
    }
    Ok(out)
}

pub const OUTCOME_PREDICTORS: [&str; 12] = [
    "brainage", "age", "sex", "htn", "dm", "af", "smk", "hcl", "nihss", "p2p", "ivt", "reca",
];
const CONTINUOUS: [&str; 4] = ["brainage", "age", "nihss", "p2p"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeAnalysis {
    /// BrainAGE of good (`present`) versus poor outcome.
    pub brainage_by_outcome: GroupComparison,
    pub raw_fit: LogisticFit,
    pub raw_table: Vec<OddsRatioRow>,
    /// Same model with continuous predictors scaled to unit variance.
    pub standardized_fit: LogisticFit,
    pub standardized_table: Vec<OddsRatioRow>,
}

/// Design matrix (intercept first) of the outcome model.
pub fn outcome_design(
    records: &[PredictionRecord],
    cohort: &Cohort,
) -> Result<(Vec<Vec<f64>>, Vec<bool>, Vec<String>)> {
    let rows = joined(records, cohort)?;
    let f = |b: bool| if b { 1.0 } else { 0.0 };
    let design = rows
        .iter()
        .map(|(_, s, b)| {
            vec![
                1.0,
                *b,
                s.age,
                f(s.sex),
                f(s.htn),
                f(s.dm),
                f(s.af),
                f(s.smk),
                f(s.hcl),
                s.nihss as f64,
                s.p2p,
                f(s.ivt),
                f(s.reca),
            ]
        })
        .collect();
    let outcomes = rows.iter().map(|(_, s, _)| s.good_outcome()).collect();
    let names = std::iter::once(INTERCEPT)
        .chain(OUTCOME_PREDICTORS)
        .map(String::from)
        .collect();
    Ok((design, outcomes, names))
}

/// Mann-Whitney of BrainAGE by outcome (good = mRS ≤ 2) and the logistic
/// model of good outcome on BrainAGE and the clinical covariates.
pub fn outcome_analysis(records: &[PredictionRecord], cohort: &Cohort) -> Result<OutcomeAnalysis> {
    let rows = joined(records, cohort)?;
    let good: Vec<f64> = rows
        .iter()
        .filter(|(_, s, _)| s.good_outcome())
        .map(|r| r.2)
        .collect();
    let poor: Vec<f64> = rows
        .iter()
        .filter(|(_, s, _)| !s.good_outcome())
        .map(|r| r.2)
        .collect();
    let brainage_by_outcome = compare_groups("good_outcome", "brainage", &good, &poor);
    let (design, outcomes, names) = outcome_design(records, cohort)?;
    let continuous: Vec<bool> = names
        .iter()
        .map(|n| CONTINUOUS.contains(&n.as_str()))
        .collect();
    let (raw_fit, raw_table) = odds_ratio_table(&design, &outcomes, &names, &continuous, false)?;
    let (standardized_fit, standardized_table) =
        odds_ratio_table(&design, &outcomes, &names, &continuous, true)?;
    Ok(OutcomeAnalysis {
        brainage_by_outcome,
        raw_fit,
        raw_table,
        standardized_fit,
        standardized_table,
    })
}

/// Dependence of a clinical variable on the acquisition center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterDependence {
    pub variable: String,
    pub result: Option<StatResult>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterSummary {
    pub center_id: u32,
    pub n: usize,
    pub age_mean: f64,
    pub age_sd: f64,
    /// Share of subjects with each binary variable, keyed by name.
    pub prevalence: BTreeMap<String, f64>,
    pub nihss_median: f64,
    pub p2p_median: f64,
    pub good_outcome_rate: f64,
}

pub const BINARY_VARIABLES: [&str; 8] = ["sex", "htn", "dm", "af", "smk", "hcl", "ivt", "reca"];

/// Per-center descriptive table plus Kruskal-Wallis tests for age, NIHSS,
/// P2P and mRS and chi-squared tests for the binary variables.
pub fn cohort_summary(cohort: &Cohort) -> (Vec<CenterSummary>, Vec<CenterDependence>) {
    let centers = cohort.center_ids();
    let members: Vec<Vec<&SubjectRecord>> = centers
        .iter()
        .map(|&c| {
            cohort
                .subjects
                .iter()
                .filter(|s| s.center_id == c)
                .collect()
        })
        .collect();
    let summaries = centers
        .iter()
        .zip(&members)
        .map(|(&c, ss)| {
            let ages: Vec<f64> = ss.iter().map(|s| s.age).collect();
            let (age_mean, age_sd) = mean_sd(&ages);
            let n = ss.len() as f64;
            CenterSummary {
                center_id: c,
                n: ss.len(),
                age_mean,
                age_sd,
                prevalence: BINARY_VARIABLES
                    .iter()
                    .map(|v| {
                        let k = ss
                            .iter()
                            .filter(|s| phenotype_flag(s, v).expect("known"))
                            .count();
                        (v.to_string(), k as f64 / n)
                    })
                    .collect(),
                nihss_median: median(&ss.iter().map(|s| s.nihss as f64).collect::<Vec<_>>()),
                p2p_median: median(&ss.iter().map(|s| s.p2p).collect::<Vec<_>>()),
                good_outcome_rate: ss.iter().filter(|s| s.good_outcome()).count() as f64 / n,
            }
        })
        .collect();

    let mut tests = Vec::new();
    let continuous: [(&str, fn(&SubjectRecord) -> f64); 4] = [
        ("age", |s| s.age),
        ("nihss", |s| s.nihss as f64),
        ("p2p", |s| s.p2p),
        ("mrs_3m", |s| s.mrs_3m as f64),
    ];
    for (name, get) in continuous {
        let groups: Vec<Vec<f64>> = members
            .iter()
            .map(|ss| ss.iter().map(|s| get(s)).collect())
            .collect();
        let refs: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
        tests.push(match kruskal_wallis(&refs) {
            Ok(r) => CenterDependence {
                variable: name.into(),
                result: Some(r),
                note: String::new(),
            },
            Err(e) => CenterDependence {
                variable: name.into(),
                result: None,
                note: format!("skipped: {e}"),
            },
        });
    }
    for name in BINARY_VARIABLES {
        let table: Vec<Vec<u64>> = members
            .iter()
            .map(|ss| {
                let yes = ss
                    .iter()
                    .filter(|s| phenotype_flag(s, name).expect("known"))
                    .count() as u64;
                vec![yes, ss.len() as u64 - yes]
            })
            .collect();
        tests.push(match chi2_independence(&table) {
            Ok(r) => CenterDependence {
                variable: name.into(),
                result: Some(r),
                note: String::new(),
            },
            Err(e) => CenterDependence {
                variable: name.into(),
                result: None,
                note: format!("skipped: {e}"),
            },
        });
    }
    (summaries, tests)
}
