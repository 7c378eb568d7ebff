//! Hypothesis tests and logistic regression used in the analysis.
//!
//! Every test is two-tailed. p-values come from exact null distributions
//! where the sample is small enough and from normal or chi-squared
//! approximations otherwise.

mod chi2;
mod kruskal;
mod logistic;
mod mann_whitney;
mod ranks;
pub mod special;
mod wilcoxon;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chi2::{chi2_independence, chi2_yates};
pub use kruskal::kruskal_wallis;
pub use logistic::{
    logistic_fit, odds_ratio_rows, odds_ratio_table, significance_stars, standardize_columns,
    LogisticFit, OddsRatioRow, IRLS_MAX_ITER, IRLS_TOL,
};
pub use mann_whitney::{mann_whitney_u, MW_EXACT_MAX_N};
pub use wilcoxon::{wilcoxon_signed_rank, WILCOXON_EXACT_MAX_N};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("degenerate test: {0}")]
    Degenerate(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("logistic regression did not converge after {iterations} iterations (last |Δll| = {last_change})")]
    NonConvergence { iterations: usize, last_change: f64 },
    #[error("singular information matrix")]
    Singular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    WilcoxonExact,
    WilcoxonNormal,
    MannWhitneyExact,
    MannWhitneyNormal,
    KruskalWallis,
    ChiSquaredYates,
    ChiSquaredPearson,
    WaldLogistic,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::WilcoxonExact => "wilcoxon_exact",
            Method::WilcoxonNormal => "wilcoxon_normal",
            Method::MannWhitneyExact => "mann_whitney_exact",
            Method::MannWhitneyNormal => "mann_whitney_normal",
            Method::KruskalWallis => "kruskal_wallis",
            Method::ChiSquaredYates => "chi_squared_yates",
            Method::ChiSquaredPearson => "chi_squared_pearson",
            Method::WaldLogistic => "wald_logistic",
        }
    }
}

/// Which way the effect points: for paired tests the sign of the typical
/// difference, for two-sample tests whether the first group tends larger.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Positive,
    Negative,
    Neutral,
}

impl Direction {
    pub(crate) fn of(x: f64) -> Self {
        if x > 0.0 {
            Direction::Positive
        } else if x < 0.0 {
            Direction::Negative
        } else {
            Direction::Neutral
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Positive => "positive",
            Direction::Negative => "negative",
            Direction::Neutral => "neutral",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: Method,
    /// Sample size(s) actually used, one per group.
    pub n: Vec<usize>,
    pub direction: Direction,
}

pub(crate) fn two_sided(lower: f64, upper: f64) -> f64 {
    (2.0 * lower.min(upper)).clamp(0.0, 1.0)
}

/// Name used for the intercept column in logistic designs.
pub const INTERCEPT: &str = "(intercept)";
