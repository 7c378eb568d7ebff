//! Small fully-connected regressor with layer normalisation.
//!
//! Architecture for hidden widths `[h1, .., hL]`:
//! `x → dense(h1) → layernorm → relu → … → dense(hL) → layernorm → relu → dense(1)`.
//!
//! Flattened parameter layout inside [`ModelParams::weights`], per hidden
//! layer in order: the `out × in` weight matrix (row-major), the layer-norm
//! gain (`out`), the layer-norm shift (`out`). The output layer's `hL`
//! weights come last; its bias is [`ModelParams::intercept`]. Hidden dense
//! layers carry no bias since layer normalisation cancels it.

use rand_distr::{Distribution, Normal};

use super::optim::{mae_sign, train_full};
use super::{Dataset, ModelError, ModelParams, ModelSpec, TrainConfig};
use crate::rng::{rng_for, stream};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug)]
struct Hidden {
    input: usize,
    output: usize,
    w: usize,
    gain: usize,
    shift: usize,
}

#[derive(Clone, Debug)]
struct Layout {
    hidden: Vec<Hidden>,
    out: usize,
    out_len: usize,
    total: usize,
}

fn layout(shapes: &[(usize, usize)]) -> Result<Layout, ModelError> {
    let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
    let Some((&(last_in, last_out), hidden_shapes)) = shapes.split_last() else {
        return bad("feedforward model needs at least one layer".into());
    };
    if last_out != 1 {
        return bad(format!("output layer must have width 1, got {last_out}"));
    }
    let mut hidden = Vec::with_capacity(hidden_shapes.len());
    let mut offset = 0;
    let mut prev_out: Option<usize> = None;
    for &(input, output) in hidden_shapes {
        if prev_out.is_some_and(|p| p != input) || output == 0 || input == 0 {
            return bad(format!("inconsistent layer shapes {shapes:?}"));
        }
        hidden.push(Hidden {
            input,
            output,
            w: offset,
            gain: offset + input * output,
            shift: offset + input * output + output,
        });
        offset += input * output + 2 * output;
        prev_out = Some(output);
    }
    if prev_out.is_some_and(|p| p != last_in) {
        return bad(format!("inconsistent layer shapes {shapes:?}"));
    }
    Ok(Layout {
        hidden,
        out: offset,
        out_len: last_in,
        total: offset + last_in,
    })
}

/// Number of entries in `weights` for the given layer shapes.
pub fn param_count(shapes: &[(usize, usize)]) -> Result<usize, ModelError> {
    layout(shapes).map(|l| l.total)
}

pub fn layer_shapes(input_dim: usize, hidden: &[usize]) -> Vec<(usize, usize)> {
    let mut shapes = Vec::with_capacity(hidden.len() + 1);
    let mut prev = input_dim;
    for &h in hidden {
        shapes.push((prev, h));
        prev = h;
    }
    shapes.push((prev, 1));
    shapes
}

/// He-normal dense weights, unit gains, zero shifts; seeded.
pub fn init_params(input_dim: usize, hidden: &[usize], intercept: f64, seed: u64) -> ModelParams {
    let shapes = layer_shapes(input_dim, hidden);
    let lay = layout(&shapes).expect("layer shapes built from widths are consistent");
    let mut weights = vec![0.0; lay.total];
    let mut rng = rng_for(seed, &[stream::PARAM_INIT]);
    for h in &lay.hidden {
        let dist = Normal::new(0.0, (2.0 / h.input as f64).sqrt()).expect("positive sd");
        for w in &mut weights[h.w..h.w + h.input * h.output] {
            *w = dist.sample(&mut rng);
        }
        weights[h.gain..h.gain + h.output].fill(1.0);
    }
    let dist = Normal::new(0.0, (1.0 / lay.out_len as f64).sqrt()).expect("positive sd");
    for w in &mut weights[lay.out..] {
        *w = dist.sample(&mut rng);
    }
    ModelParams {
        weights,
        intercept,
        layer_shapes: shapes,
    }
}

/// True for dense weights (penalised by L2), false for layer-norm parameters.
pub fn penalty_mask(shapes: &[(usize, usize)]) -> Vec<bool> {
    let lay = layout(shapes).expect("validated shapes");
    let mut mask = vec![false; lay.total];
    for h in &lay.hidden {
        mask[h.w..h.w + h.input * h.output].fill(true);
    }
    mask[lay.out..].fill(true);
    mask
}

struct LayerCache {
    input: Vec<f64>,
    normed: Vec<f64>,
    inv_sigma: f64,
    pre_relu: Vec<f64>,
}

fn forward_cached(
    lay: &Layout,
    p: &ModelParams,
    x: &[f64],
    caches: &mut Vec<LayerCache>,
) -> (f64, Vec<f64>) {
    caches.clear();
    let w = &p.weights;
    let mut act = x.to_vec();
    for h in &lay.hidden {
        let mut z = vec![0.0; h.output];
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &w[h.w + o * h.input..h.w + (o + 1) * h.input];
            *zo = row.iter().zip(&act).map(|(a, b)| a * b).sum();
        }
        let n = h.output as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv_sigma = 1.0 / (var + LN_EPS).sqrt();
        let normed: Vec<f64> = z.iter().map(|v| (v - mean) * inv_sigma).collect();
        let pre_relu: Vec<f64> = normed
            .iter()
            .enumerate()
            .map(|(o, v)| w[h.gain + o] * v + w[h.shift + o])
            .collect();
        let next: Vec<f64> = pre_relu.iter().map(|&v| v.max(0.0)).collect();
        caches.push(LayerCache {
            input: act,
            normed,
            inv_sigma,
            pre_relu,
        });
        act = next;
    }
    let y = w[lay.out..]
        .iter()
        .zip(&act)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        + p.intercept;
    (y, act)
}

pub(crate) fn forward(p: &ModelParams, x: &[f64]) -> f64 {
    let lay = layout(&p.layer_shapes).expect("validated shapes");
    let mut caches = Vec::with_capacity(lay.hidden.len());
    forward_cached(&lay, p, x, &mut caches).0
}

/// Accumulates `dy · ∂ŷ/∂θ` into `grad` (intercept in the last slot).
fn backward(
    lay: &Layout,
    p: &ModelParams,
    caches: &[LayerCache],
    last_act: &[f64],
    dy: f64,
    grad: &mut [f64],
) {
    let w = &p.weights;
    let n_w = w.len();
    for (g, a) in grad[lay.out..n_w].iter_mut().zip(last_act) {
        *g += dy * a;
    }
    grad[n_w] += dy;
    let mut d_act: Vec<f64> = w[lay.out..].iter().map(|wo| dy * wo).collect();
    for (h, c) in lay.hidden.iter().zip(caches).rev() {
        let out = h.output;
        let mut d_norm = vec![0.0; out];
        for o in 0..out {
            let du = if c.pre_relu[o] > 0.0 { d_act[o] } else { 0.0 };
            grad[h.gain + o] += du * c.normed[o];
            grad[h.shift + o] += du;
            d_norm[o] = du * w[h.gain + o];
        }
        let n = out as f64;
        let mean_dn = d_norm.iter().sum::<f64>() / n;
        let mean_dn_n = d_norm
            .iter()
            .zip(&c.normed)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n;
        let dz: Vec<f64> = d_norm
            .iter()
            .zip(&c.normed)
            .map(|(dn, nv)| c.inv_sigma * (dn - mean_dn - nv * mean_dn_n))
            .collect();
        let mut d_in = vec![0.0; h.input];
        for (o, &dzo) in dz.iter().enumerate() {
            if dzo == 0.0 {
                continue;
            }
            let base = h.w + o * h.input;
            for i in 0..h.input {
                grad[base + i] += dzo * c.input[i];
                d_in[i] += dzo * w[base + i];
            }
        }
        d_act = d_in;
    }
}

pub(crate) fn batch_gradient(
    p: &ModelParams,
    data: &Dataset,
    batch: &[usize],
    grad: &mut [f64],
) -> f64 {
    let lay = layout(&p.layer_shapes).expect("validated shapes");
    let scale = 1.0 / batch.len() as f64;
    let mut caches = Vec::with_capacity(lay.hidden.len());
    let mut loss = 0.0;
    for &i in batch {
        let (y, last) = forward_cached(&lay, p, data.row(i), &mut caches);
        let r = y - data.target(i);
        loss += r.abs();
        let s = mae_sign(r);
        if s != 0.0 {
            backward(&lay, p, &caches, &last, s * scale, grad);
        }
    }
    loss * scale
}

/// Mean absolute error over `indices` and its analytic gradient with respect
/// to every parameter (weights then intercept).
pub fn mae_and_gradient(
    p: &ModelParams,
    data: &Dataset,
    indices: &[usize],
) -> Result<(f64, Vec<f64>), ModelError> {
    p.validate()?;
    if !p.is_feedforward() {
        return Err(ModelError::InvalidConfig(
            "not a feedforward parameter set".into(),
        ));
    }
    let mut grad = vec![0.0; p.len()];
    let loss = batch_gradient(p, data, indices, &mut grad);
    Ok((loss, grad))
}

/// Trains the layer-normalised regressor with the optimiser named in `cfg`.
/// The output bias starts at `cfg.intercept_init`.
pub fn fit_feedforward(
    train: &Dataset,
    cfg: &TrainConfig,
    hidden: &[usize],
) -> Result<ModelParams, ModelError> {
    if train.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if hidden.is_empty() || hidden.contains(&0) {
        return Err(ModelError::InvalidConfig(format!(
            "invalid hidden widths {hidden:?}"
        )));
    }
    let spec = ModelSpec::Feedforward {
        hidden: hidden.to_vec(),
    };
    let params = spec.init_params(train.dim(), cfg.intercept_init, cfg.seed);
    train_full(params, train, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{predict, LrSchedule, Optimizer};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn param_count_matches_layout() {
        let shapes = layer_shapes(3, &[4, 2]);
        assert_eq!(shapes, vec![(3, 4), (4, 2), (2, 1)]);
        assert_eq!(param_count(&shapes).unwrap(), 3 * 4 + 8 + 4 * 2 + 4 + 2);
        assert!(param_count(&[(3, 4), (5, 1)]).is_err());
        assert!(param_count(&[(3, 2)]).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let a = init_params(5, &[8, 4], 70.0, 1);
        let b = init_params(5, &[8, 4], 70.0, 1);
        let c = init_params(5, &[8, 4], 70.0, 2);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.intercept, 70.0);
        a.validate().unwrap();
    }

    #[test]
    fn zero_output_weights_predict_intercept() {
        let mut p = init_params(3, &[4, 2], 65.0, 3);
        let out = p.weights.len() - 2;
        p.weights[out..].fill(0.0);
        assert_eq!(predict(&p, &[0.3, -1.0, 2.0]).unwrap(), 65.0);
    }

    #[test]
    fn constant_target_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..64)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let data = Dataset::new(rows.clone(), vec![70.0; 64]).unwrap();
        let cfg = TrainConfig {
            epochs: 300,
            batch_size: 8,
            l2_penalty: 0.0,
            schedule: LrSchedule::LinearDecay {
                eta0: 0.05,
                eta_end: 0.001,
                horizon: 300,
            },
            optimizer: Optimizer::Adam,
            seed: 1,
            intercept_init: 60.0,
        };
        let p = fit_feedforward(&data, &cfg, &[16, 8]).unwrap();
        for row in &rows {
            let y = predict(&p, row).unwrap();
            assert!((y - 70.0).abs() < 0.5, "prediction {y}");
        }
    }
}
