//! Dense feed-forward classifier engine.
//!
//! Networks are stacks of [`DenseLayer`]s. Hidden layers use ReLU, the output
//! layer is linear and the softmax is only applied inside the loss. Weights are
//! stored `[out_dim × in_dim]` so that every neuron owns one row plus its bias.
//!
//! All randomness is drawn from seeded ChaCha generators, and every mutation of
//! a network refreshes its *stamp* so that activation traces taken before the
//! mutation can be detected as stale.

mod attack;
mod backward;
mod checkpoint;
mod forward;
mod train;

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use attack::{fgsm, pgd, Attack};
pub use backward::{backward, Gradients};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use checkpoint::{from_bytes, to_bytes};
pub use forward::{
    forward, logits, mask_forward, mask_logits, predict, predict_restricted, ActivationTrace,
    KeepMask, NeuronMask,
};
pub use train::{evaluate, train, Accuracy, ParamMask, TrainConfig};

pub(crate) use backward::backward_raw;
pub(crate) use forward::{argmax_rows, propagate};
pub(crate) use train::{evaluate_by, train_with, AdversarialTraining, TrainHooks};

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Array2<f32>,
    biases: Array1<f32>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Array2<f32>, biases: Array1<f32>, activation: Activation) -> Result<Self> {
        if weights.nrows() != biases.len() {
            return Err(Error::shape(format!(
                "weights have {} rows but biases have {} entries",
                weights.nrows(),
                biases.len()
            )));
        }
        if weights.iter().chain(biases.iter()).any(|v| !v.is_finite()) {
            return Err(Error::arg("layer parameters must be finite"));
        }
        Ok(DenseLayer {
            weights,
            biases,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f32> {
        &self.weights
    }

    pub fn biases(&self) -> &Array1<f32> {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// A layered dense classifier.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<DenseLayer>,
    rng_seed: u64,
    stamp: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Network {
    /// Builds a ReLU MLP with He-normal weights and zero biases.
    ///
    /// `sizes` lists every width including input and output, e.g.
    /// `[784, 512, 256, 10]`.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::arg(
                "a network needs at least an input and an output width, all positive",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let activation = if i == last {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                let weights = he_normal(w[1], w[0], &mut rng);
                DenseLayer {
                    weights,
                    biases: Array1::zeros(w[1]),
                    activation,
                }
            })
            .collect();
        Ok(Network {
            layers,
            rng_seed: seed,
            stamp: fresh_stamp(),
        })
    }

    pub fn from_layers(layers: Vec<DenseLayer>, rng_seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::arg("a network needs at least one layer"));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[1].in_dim() != pair[0].out_dim() {
                return Err(Error::shape(format!(
                    "layer {} expects {} inputs but layer {} produces {}",
                    k + 1,
                    pair[1].in_dim(),
                    k,
                    pair[0].out_dim()
                )));
            }
        }
        Ok(Network {
            layers,
            rng_seed,
            stamp: fresh_stamp(),
        })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layer(&self, index: usize) -> &DenseLayer {
        &self.layers[index]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Number of hidden layers (every layer but the output layer).
    pub fn num_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.num_hidden()]
            .iter()
            .map(DenseLayer::out_dim)
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn num_categories(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// Identifies the parameter state; refreshed by every mutation.
    pub fn stamp(&self) -> u64 {
        self.stamp
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut Array2<f32> {
        self.stamp = fresh_stamp();
        &mut self.layers[layer].weights
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut Array1<f32> {
        self.stamp = fresh_stamp();
        &mut self.layers[layer].biases
    }

    pub(crate) fn layer_params_mut(&mut self, layer: usize) -> (&mut Array2<f32>, &mut Array1<f32>) {
        self.stamp = fresh_stamp();
        let l = &mut self.layers[layer];
        (&mut l.weights, &mut l.biases)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.biases.iter().all(|v| v.is_finite())
        })
    }

    /// Appends `extra` freshly initialised units to the output layer.
    ///
    /// Existing output rows are copied unchanged; the new rows use the same
    /// He-normal initialisation as [`Network::new`], seeded by `seed`.
    pub fn extend_outputs(&self, extra: usize, seed: u64) -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = self.layers.len() - 1;
        let old = &self.layers[last];
        let fresh = he_normal(extra, old.in_dim(), &mut rng);
        let weights = ndarray::concatenate(ndarray::Axis(0), &[old.weights.view(), fresh.view()])
            .expect("column counts agree");
        let mut biases = old.biases.to_vec();
        biases.extend(std::iter::repeat_n(0.0, extra));
        let mut layers = self.layers.clone();
        layers[last] = DenseLayer {
            weights,
            biases: Array1::from(biases),
            activation: old.activation,
        };
        Network {
            layers,
            rng_seed: self.rng_seed,
            stamp: fresh_stamp(),
        }
    }
}

fn he_normal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f32> {
    let std = (2.0 / cols as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_fn((rows, cols), |_| normal.sample(rng) as f32)
}
