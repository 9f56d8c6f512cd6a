use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attack::Attack;
use super::backward::backward_raw;
use super::forward::{argmax_rows, propagate, NeuronMask};
use super::Network;
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 5,
            batch_size: 64,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::arg("momentum must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Which neurons may be updated during training, for every layer including
/// the output layer.
///
/// A neuron owns its incoming weight row and its bias; outgoing weights belong
/// to the downstream neuron.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamMask {
    pub layers: Vec<Vec<bool>>,
}

impl ParamMask {
    pub fn all(net: &Network) -> Self {
        ParamMask {
            layers: net.layers().iter().map(|l| vec![true; l.out_dim()]).collect(),
        }
    }

    pub fn none(net: &Network) -> Self {
        ParamMask {
            layers: net.layers().iter().map(|l| vec![false; l.out_dim()]).collect(),
        }
    }

    /// Hidden neurons follow `hidden`; every output unit is set to `head`.
    pub fn from_neurons(net: &Network, hidden: &NeuronMask, head: bool) -> Result<Self> {
        hidden.validate(net)?;
        let mut layers = hidden.keep.clone();
        layers.push(vec![head; net.num_categories()]);
        Ok(ParamMask { layers })
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        if self.layers.len() != net.num_layers()
            || self
                .layers
                .iter()
                .zip(net.layers())
                .any(|(m, l)| m.len() != l.out_dim())
        {
            return Err(Error::shape("parameter mask does not match network layout"));
        }
        Ok(())
    }

    /// Number of parameters owned by trainable neurons.
    pub fn trainable_params(&self, net: &Network) -> usize {
        self.layers
            .iter()
            .zip(net.layers())
            .map(|(m, l)| m.iter().filter(|&&t| t).count() * (l.in_dim() + 1))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct AdversarialTraining {
    pub attack: Attack,
    pub regenerate_each_epoch: bool,
}

/// Extra behaviour for the training loop used by the maintenance tasks.
#[derive(Debug, Default, Clone)]
pub(crate) struct TrainHooks<'a> {
    /// Per-weight keep flags; `false` entries are pinned to zero.
    pub weight_mask: Option<&'a [Array2<bool>]>,
    /// Train on `L(x) + L(adv_x)` with adversarial counterparts from the
    /// current model.
    pub adversarial: Option<AdversarialTraining>,
}

/// Mini-batch SGD with momentum on the mean softmax cross-entropy.
///
/// Only parameters owned by mask-true neurons change; the rest are returned
/// bit-identical.
pub fn train(
    net: &Network,
    data: &Dataset,
    cfg: &TrainConfig,
    mask: Option<&ParamMask>,
) -> Result<Network> {
    train_with(net, data, cfg, mask, &TrainHooks::default())
}

pub(crate) fn train_with(
    net: &Network,
    data: &Dataset,
    cfg: &TrainConfig,
    mask: Option<&ParamMask>,
    hooks: &TrainHooks<'_>,
) -> Result<Network> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::arg("cannot train on an empty dataset"));
    }
    if data.dim() != net.input_dim() {
        return Err(Error::InputShape {
            expected: net.input_dim(),
            actual: data.dim(),
        });
    }
    if data.num_categories() > net.num_categories() {
        return Err(Error::arg(format!(
            "dataset has {} categories but the network only {} outputs",
            data.num_categories(),
            net.num_categories()
        )));
    }
    let full;
    let mask = match mask {
        Some(m) => {
            m.validate(net)?;
            m
        }
        None => {
            full = ParamMask::all(net);
            &full
        }
    };
    if let Some(wm) = hooks.weight_mask {
        if wm.len() != net.num_layers()
            || wm
                .iter()
                .zip(net.layers())
                .any(|(m, l)| m.dim() != l.weights().dim())
        {
            return Err(Error::shape("weight mask does not match network layout"));
        }
    }

    let mut net = net.clone();
    if cfg.epochs == 0 || mask.layers.iter().all(|m| m.iter().all(|t| !t)) {
        return Ok(net);
    }

    let mut vel_w: Vec<Array2<f32>> = net
        .layers()
        .iter()
        .map(|l| Array2::zeros(l.weights().dim()))
        .collect();
    let mut vel_b: Vec<Array1<f32>> = net
        .layers()
        .iter()
        .map(|l| Array1::zeros(l.out_dim()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut adv_inputs: Option<Array2<f32>> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        if let Some(adv) = &hooks.adversarial {
            if adv.regenerate_each_epoch || adv_inputs.is_none() {
                adv_inputs = Some(adv.attack.generate_batched(
                    &net,
                    data.inputs().view(),
                    data.labels(),
                )?);
            }
        }
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut x = data.inputs().select(Axis(0), chunk);
            let mut y: Vec<usize> = chunk.iter().map(|&i| data.labels()[i]).collect();
            let mut scale = 1.0f32;
            if let Some(adv) = &adv_inputs {
                let xa = adv.select(Axis(0), chunk);
                x = ndarray::concatenate(Axis(0), &[x.view(), xa.view()])
                    .expect("same width");
                y.extend_from_within(..);
                // the mean over the stacked batch is half of L(x) + L(adv)
                scale = 2.0;
            }
            let outputs = propagate(&net, x.view(), None);
            let grads = backward_raw(&net, x.view(), &outputs, &y, scale, false)?;
            if !grads.loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b });
            }
            for l in 0..net.num_layers() {
                let (w, bias) = net.layer_params_mut(l);
                let wmask = hooks.weight_mask.map(|m| &m[l]);
                for (r, &trainable) in mask.layers[l].iter().enumerate() {
                    if !trainable {
                        continue;
                    }
                    let mut wrow = w.row_mut(r);
                    let mut vrow = vel_w[l].row_mut(r);
                    let grow = grads.weights[l].row(r);
                    for c in 0..wrow.len() {
                        if wmask.is_some_and(|m| !m[[r, c]]) {
                            wrow[c] = 0.0;
                            vrow[c] = 0.0;
                            continue;
                        }
                        vrow[c] = cfg.momentum * vrow[c] + grow[c];
                        wrow[c] -= cfg.learning_rate * vrow[c];
                    }
                    let v = &mut vel_b[l][r];
                    *v = cfg.momentum * *v + grads.biases[l][r];
                    bias[r] -= cfg.learning_rate * *v;
                }
            }
        }
        if !net.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size) - 1,
            });
        }
        log::debug!("epoch {epoch} done");
    }
    Ok(net)
}

/// Overall and per-category accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub accuracy: f64,
    /// `None` for categories without samples.
    pub per_category: Vec<Option<f64>>,
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    pub(crate) fn from_predictions(
        predictions: &[usize],
        labels: &[usize],
        num_categories: usize,
    ) -> Accuracy {
        let mut hits = vec![0usize; num_categories];
        let mut counts = vec![0usize; num_categories];
        for (&p, &y) in predictions.iter().zip(labels) {
            counts[y] += 1;
            if p == y {
                hits[y] += 1;
            }
        }
        let correct: usize = hits.iter().sum();
        let total = labels.len();
        Accuracy {
            accuracy: if total == 0 {
                0.0
            } else {
                correct as f64 / total as f64
            },
            per_category: hits
                .iter()
                .zip(&counts)
                .map(|(&h, &c)| (c > 0).then(|| h as f64 / c as f64))
                .collect(),
            correct,
            total,
        }
    }

    /// Mean of the per-category accuracies over categories that have samples.
    pub fn category_mean(&self) -> f64 {
        let present: Vec<f64> = self.per_category.iter().flatten().copied().collect();
        if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        }
    }
}

const EVAL_CHUNK: usize = 2048;

pub fn evaluate(net: &Network, data: &Dataset) -> Result<Accuracy> {
    evaluate_by(net, data, |x| {
        let out = propagate(net, x, None).pop().expect("layers");
        Ok(argmax_rows(out.view(), 0..out.ncols()))
    })
}

/// Accuracy of an arbitrary batched predictor over `data`.
pub(crate) fn evaluate_by<F>(net: &Network, data: &Dataset, mut predict: F) -> Result<Accuracy>
where
    F: FnMut(ArrayView2<'_, f32>) -> Result<Vec<usize>>,
{
    if data.is_empty() {
        return Err(Error::arg("cannot evaluate on an empty dataset"));
    }
    if data.dim() != net.input_dim() {
        return Err(Error::InputShape {
            expected: net.input_dim(),
            actual: data.dim(),
        });
    }
    let mut predictions = Vec::with_capacity(data.len());
    for start in (0..data.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(data.len());
        let x = data.inputs().slice(ndarray::s![start..end, ..]);
        predictions.extend(predict(x)?);
    }
    Ok(Accuracy::from_predictions(
        &predictions,
        data.labels(),
        data.num_categories(),
    ))
}
