use serde::{Deserialize, Serialize};

use super::{feedforward, LrSchedule, ModelError, ModelParams};

/// Hidden widths of the default feedforward regressor.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 32];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_penalty: f64,
    pub schedule: LrSchedule,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Initial intercept in years.
    pub intercept_init: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.l2_penalty.is_finite() && self.l2_penalty >= 0.0) {
            return bad(format!(
                "l2_penalty must be finite and >= 0, got {}",
                self.l2_penalty
            ));
        }
        if !self.intercept_init.is_finite() {
            return bad("intercept_init must be finite".into());
        }
        self.schedule.validate()
    }
}

/// Which regressor a set of parameters belongs to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Linear,
    Feedforward { hidden: Vec<usize> },
}

impl ModelSpec {
    pub fn feedforward_default() -> Self {
        ModelSpec::Feedforward {
            hidden: DEFAULT_HIDDEN.to_vec(),
        }
    }

    /// Initial parameters: zero weights for the linear model, seeded He
    /// initialisation for the feedforward model. The intercept starts at
    /// `intercept` in both cases.
    pub fn init_params(&self, input_dim: usize, intercept: f64, seed: u64) -> ModelParams {
        match self {
            ModelSpec::Linear => ModelParams::linear(input_dim, intercept),
            ModelSpec::Feedforward { hidden } => {
                feedforward::init_params(input_dim, hidden, intercept, seed)
            }
        }
    }
}
