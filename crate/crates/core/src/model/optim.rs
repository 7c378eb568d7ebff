use rand::seq::SliceRandom;

use super::{feedforward, Dataset, ModelError, ModelParams, Optimizer, TrainConfig};
use crate::rng::{rng_for, stream};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Subgradient of `|r|`, with `sign(0) = 0`.
#[inline]
pub fn mae_sign(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mutable optimiser state carried across epochs of one training run.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    kind: Optimizer,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    steps: usize,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, n_params: usize) -> Self {
        let moments = if kind == Optimizer::Adam { n_params } else { 0 };
        OptimizerState {
            kind,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
            t: 0,
            steps: 0,
        }
    }

    /// Mini-batch steps taken so far.
    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// Mean MAE of the batch and its gradient (averaged over the batch) written
/// into `grad`, whose last slot is the intercept.
fn batch_gradient(params: &ModelParams, data: &Dataset, batch: &[usize], grad: &mut [f64]) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    if params.is_feedforward() {
        return feedforward::batch_gradient(params, data, batch, grad);
    }
    let scale = 1.0 / batch.len() as f64;
    let d = params.weights.len();
    let mut loss = 0.0;
    for &i in batch {
        let x = data.row(i);
        let r = super::params::dot(&params.weights, x) + params.intercept - data.target(i);
        loss += r.abs();
        let s = mae_sign(r) * scale;
        if s != 0.0 {
            for (g, xi) in grad[..d].iter_mut().zip(x) {
                *g += s * xi;
            }
            grad[d] += s;
        }
    }
    loss * scale
}

fn penalty_mask(params: &ModelParams) -> Vec<bool> {
    if params.is_feedforward() {
        let mut mask = feedforward::penalty_mask(&params.layer_shapes);
        mask.push(false);
        mask
    } else {
        let mut mask = vec![true; params.weights.len()];
        mask.push(false);
        mask
    }
}

/// Row order for one epoch: a Fisher-Yates shuffle keyed by `(seed, epoch)`.
pub(crate) fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_for(seed, &[stream::EPOCH_SHUFFLE, epoch as u64]);
    order.shuffle(&mut rng);
    order
}

/// One pass over `data` with the learning rate of schedule step `epoch`.
///
/// Objective per mini-batch is `mean|ŷ - y| + λ‖w‖²`. With SGD the L2 term is
/// applied as its proximal step `w ← (w - ηg) / (1 + 2ηλ)`, which is stable
/// for any λ. Adam folds `2λw` into the gradient. Returns the mean
/// mini-batch objective over the epoch.
pub fn train_epoch(
    params: &mut ModelParams,
    data: &Dataset,
    cfg: &TrainConfig,
    epoch: usize,
    seed: u64,
    state: &mut OptimizerState,
) -> Result<f64, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if data.dim() != params.input_dim() {
        return Err(ModelError::Shape {
            expected: params.input_dim(),
            actual: data.dim(),
        });
    }
    let lr = cfg.schedule.value(epoch)?;
    let lambda = cfg.l2_penalty;
    let mask = penalty_mask(params);
    let n_params = params.len();
    if state.kind == Optimizer::Adam && state.m.len() != n_params {
        *state = OptimizerState::new(Optimizer::Adam, n_params);
    }
    let mut grad = vec![0.0; n_params];
    let order = epoch_order(data.len(), seed, epoch);
    let batch_size = cfg.batch_size.clamp(1, data.len());
    let mut total = 0.0;
    let mut batches = 0usize;
    for batch in order.chunks(batch_size) {
        state.steps += 1;
        let mae = batch_gradient(params, data, batch, &mut grad);
        let penalty = if lambda > 0.0 {
            lambda
                * params
                    .weights
                    .iter()
                    .zip(&mask)
                    .filter(|(_, &m)| m)
                    .map(|(w, _)| w * w)
                    .sum::<f64>()
        } else {
            0.0
        };
        let objective = mae + penalty;
        if !objective.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(ModelError::Divergence {
                epoch,
                step: state.steps,
            });
        }
        match state.kind {
            Optimizer::Sgd => {
                let shrink = 1.0 / (1.0 + 2.0 * lr * lambda);
                for (i, (&g, &penalised)) in grad.iter().zip(&mask).enumerate() {
                    let p = params.get_mut(i);
                    if penalised && lambda > 0.0 {
                        *p = (*p - lr * g) * shrink;
                    } else {
                        *p -= lr * g;
                    }
                }
            }
            Optimizer::Adam => {
                state.t += 1;
                let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
                for i in 0..n_params {
                    let mut g = grad[i];
                    if mask[i] && lambda > 0.0 {
                        g += 2.0 * lambda * params.get(i);
                    }
                    state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
                    state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = state.m[i] / bc1;
                    let v_hat = state.v[i] / bc2;
                    *params.get_mut(i) -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
        if !params.is_finite() {
            return Err(ModelError::Divergence {
                epoch,
                step: state.steps,
            });
        }
        total += objective;
        batches += 1;
    }
    Ok(total / batches as f64)
}

/// Shared driver for full training runs.
pub(crate) fn train_full(
    mut params: ModelParams,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<ModelParams, ModelError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if cfg.schedule.horizon() < cfg.epochs {
        return Err(ModelError::InvalidConfig(format!(
            "schedule horizon {} shorter than {} epochs",
            cfg.schedule.horizon(),
            cfg.epochs
        )));
    }
    let mut state = OptimizerState::new(cfg.optimizer, params.len());
    for epoch in 1..=cfg.epochs {
        train_epoch(&mut params, data, cfg, epoch, cfg.seed, &mut state)?;
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_convention() {
        assert_eq!(mae_sign(3.0), 1.0);
        assert_eq!(mae_sign(-0.1), -1.0);
        assert_eq!(mae_sign(0.0), 0.0);
        assert_eq!(mae_sign(-0.0), 0.0);
    }

    #[test]
    fn zero_residual_batch_has_zero_gradient() {
        let data = Dataset::new(vec![vec![1.0, 2.0], vec![3.0, -1.0]], vec![4.0, 3.0]).unwrap();
        // weights [1, 1], intercept 1 fits both rows exactly.
        let params = ModelParams {
            weights: vec![1.0, 1.0],
            intercept: 1.0,
            layer_shapes: vec![],
        };
        let mut grad = vec![9.0; 3];
        let loss = batch_gradient(&params, &data, &[0, 1], &mut grad);
        assert_eq!(loss, 0.0);
        assert_eq!(grad, vec![0.0; 3]);
    }

    #[test]
    fn mixed_batch_gradient() {
        let data = Dataset::new(vec![vec![2.0], vec![4.0]], vec![0.0, 10.0]).unwrap();
        let params = ModelParams::linear(1, 1.0);
        let mut grad = vec![0.0; 2];
        // residuals: +1 and -9
        let loss = batch_gradient(&params, &data, &[0, 1], &mut grad);
        assert_eq!(loss, 5.0);
        assert_eq!(grad, vec![(2.0 - 4.0) / 2.0, 0.0]);
    }

    #[test]
    fn epoch_order_is_a_seeded_permutation() {
        let a = epoch_order(50, 3, 1);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_eq!(a, epoch_order(50, 3, 1));
        assert_ne!(a, epoch_order(50, 3, 2));
    }
}
