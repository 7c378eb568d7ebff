//! Age regressors and their training machinery.

mod config;
mod dataset;
mod features;
pub mod feedforward;
mod linear;
mod optim;
mod params;
mod schedule;
mod tuning;

use thiserror::Error;

pub use config::{ModelSpec, Optimizer, TrainConfig, DEFAULT_HIDDEN};
pub use dataset::Dataset;
pub use features::{expand_polynomial, expand_polynomial_names, polynomial_len};
pub use feedforward::fit_feedforward;
pub use linear::fit_linear_sgd;
pub use optim::{mae_sign, train_epoch, OptimizerState};
pub use params::{predict, ModelParams};
pub use schedule::LrSchedule;
pub use tuning::{cv_mae, tune_l2_cv, DEFAULT_L2_GRID};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unsupported polynomial degree {0}; only degree 2 is supported")]
    UnsupportedDegree(usize),
    #[error("schedule step {step} outside 1..={horizon}")]
    StepOutOfRange { step: usize, horizon: usize },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: expected {expected} features, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    Divergence { epoch: usize, step: usize },
    #[error("insufficient data: {n} samples for {k}-fold cross-validation")]
    InsufficientData { n: usize, k: usize },
    #[error("invalid data: {0}")]
    InvalidData(String),
}

impl ModelSpec {
    /// Trains a fresh model of this kind on `data`.
    pub fn fit(&self, data: &Dataset, cfg: &TrainConfig) -> Result<ModelParams, ModelError> {
        match self {
            ModelSpec::Linear => fit_linear_sgd(data, cfg),
            ModelSpec::Feedforward { hidden } => fit_feedforward(data, cfg, hidden),
        }
    }
}
