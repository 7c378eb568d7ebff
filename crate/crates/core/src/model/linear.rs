use super::optim::train_full;
use super::{Dataset, ModelError, ModelParams, TrainConfig};

/// Linear regression on the mean absolute error with an L2 penalty, trained
/// by mini-batch SGD for exactly `cfg.epochs` seeded passes.
///
/// Weights start at zero and the intercept at `cfg.intercept_init`. The run
/// is bit-reproducible for a given data order and seed.
pub fn fit_linear_sgd(train: &Dataset, cfg: &TrainConfig) -> Result<ModelParams, ModelError> {
    if train.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if let Some(age) = train.targets().iter().find(|&&a| a <= 0.0) {
        return Err(ModelError::InvalidData(format!("non-positive age {age}")));
    }
    train_full(
        ModelParams::linear(train.dim(), cfg.intercept_init),
        train,
        cfg,
    )
}
