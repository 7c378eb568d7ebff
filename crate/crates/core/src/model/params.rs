use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::feedforward;
use super::ModelError;

/// Flat parameter container shared by every regressor.
///
/// Linear models store one weight per feature and leave `layer_shapes` empty.
/// The feedforward model stores every layer flattened into `weights` (see
/// [`feedforward`] for the layout) and records `(in, out)` per dense layer.
/// `intercept` is the output bias in years for both.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub weights: Vec<f64>,
    pub intercept: f64,
    #[serde(default, rename = "shapes")]
    pub layer_shapes: Vec<(usize, usize)>,
}

impl ModelParams {
    pub fn linear(dim: usize, intercept: f64) -> Self {
        ModelParams {
            weights: vec![0.0; dim],
            intercept,
            layer_shapes: Vec::new(),
        }
    }

    pub fn is_feedforward(&self) -> bool {
        !self.layer_shapes.is_empty()
    }

    /// Number of input features the parameters expect.
    pub fn input_dim(&self) -> usize {
        match self.layer_shapes.first() {
            Some(&(input, _)) => input,
            None => self.weights.len(),
        }
    }

    /// Total trainable scalars, intercept included.
    pub fn len(&self) -> usize {
        self.weights.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_finite(&self) -> bool {
        self.intercept.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    pub(crate) fn get(&self, i: usize) -> f64 {
        if i < self.weights.len() {
            self.weights[i]
        } else {
            self.intercept
        }
    }

    pub(crate) fn get_mut(&mut self, i: usize) -> &mut f64 {
        if i < self.weights.len() {
            &mut self.weights[i]
        } else {
            &mut self.intercept
        }
    }

    /// Checks internal consistency of the layout.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.is_feedforward() {
            let expected = feedforward::param_count(&self.layer_shapes)?;
            if expected != self.weights.len() {
                return Err(ModelError::Shape {
                    expected,
                    actual: self.weights.len(),
                });
            }
        }
        Ok(())
    }

    /// SHA-256 over the big-endian bytes of every parameter and shape, hex encoded.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for w in &self.weights {
            hasher.update(w.to_bits().to_be_bytes());
        }
        hasher.update(self.intercept.to_bits().to_be_bytes());
        for &(i, o) in &self.layer_shapes {
            hasher.update((i as u64).to_be_bytes());
            hasher.update((o as u64).to_be_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// Predicted age in years.
pub fn predict(params: &ModelParams, features: &[f64]) -> Result<f64, ModelError> {
    let expected = params.input_dim();
    if features.len() != expected {
        return Err(ModelError::Shape {
            expected,
            actual: features.len(),
        });
    }
    if params.is_feedforward() {
        params.validate()?;
        Ok(feedforward::forward(params, features))
    } else {
        Ok(dot(&params.weights, features) + params.intercept)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
