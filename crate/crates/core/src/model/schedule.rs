use serde::{Deserialize, Serialize};

use super::ModelError;

/// Learning-rate schedule indexed by a 1-based step (epoch or round).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    /// `eta0 / step^power`.
    InverseScaling {
        eta0: f64,
        power: f64,
        horizon: usize,
    },
    /// Linear interpolation from `eta0` at step 1 to `eta_end` at `horizon`.
    LinearDecay {
        eta0: f64,
        eta_end: f64,
        horizon: usize,
    },
    Constant {
        eta0: f64,
        horizon: usize,
    },
}

impl LrSchedule {
    /// Default exponent for inverse scaling.
    pub const DEFAULT_POWER: f64 = 0.25;

    pub fn horizon(&self) -> usize {
        match *self {
            LrSchedule::InverseScaling { horizon, .. }
            | LrSchedule::LinearDecay { horizon, .. }
            | LrSchedule::Constant { horizon, .. } => horizon,
        }
    }

    pub fn eta0(&self) -> f64 {
        match *self {
            LrSchedule::InverseScaling { eta0, .. }
            | LrSchedule::LinearDecay { eta0, .. }
            | LrSchedule::Constant { eta0, .. } => eta0,
        }
    }

    /// Same schedule stretched or shrunk to a new horizon.
    pub fn with_horizon(self, horizon: usize) -> Self {
        match self {
            LrSchedule::InverseScaling { eta0, power, .. } => LrSchedule::InverseScaling {
                eta0,
                power,
                horizon,
            },
            LrSchedule::LinearDecay { eta0, eta_end, .. } => LrSchedule::LinearDecay {
                eta0,
                eta_end,
                horizon,
            },
            LrSchedule::Constant { eta0, .. } => LrSchedule::Constant { eta0, horizon },
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::InvalidSchedule(msg.to_string()));
        if self.horizon() == 0 {
            return bad("horizon must be positive");
        }
        // A zero rate is accepted: it freezes the parameters.
        if !(self.eta0().is_finite() && self.eta0() >= 0.0) {
            return bad("eta0 must be finite and non-negative");
        }
        match *self {
            LrSchedule::InverseScaling { power, .. } if !(power.is_finite() && power > 0.0) => {
                bad("power must be positive")
            }
            LrSchedule::LinearDecay { eta0, eta_end, .. }
                if !(eta_end.is_finite() && eta_end >= 0.0 && eta_end <= eta0) =>
            {
                bad("eta_end must lie in [0, eta0]")
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, step: usize) -> Result<f64, ModelError> {
        let horizon = self.horizon();
        if step == 0 || step > horizon {
            return Err(ModelError::StepOutOfRange { step, horizon });
        }
        Ok(match *self {
            LrSchedule::InverseScaling { eta0, power, .. } => eta0 / (step as f64).powf(power),
            LrSchedule::LinearDecay {
                eta0,
                eta_end,
                horizon,
            } => {
                if horizon == 1 {
                    eta0
                } else {
                    let frac = (step - 1) as f64 / (horizon - 1) as f64;
                    eta0 + (eta_end - eta0) * frac
                }
            }
            LrSchedule::Constant { eta0, .. } => eta0,
        })
    }
}
