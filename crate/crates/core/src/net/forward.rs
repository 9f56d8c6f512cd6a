use ndarray::{Array2, ArrayView2, Axis};

use super::{Activation, Network};
use crate::error::{Error, Result};

/// Cached post-activation outputs of every layer for one batch.
///
/// `outputs[l]` is `[batch × out_dim(l)]`; the last entry holds the logits.
#[derive(Debug, Clone)]
pub struct ActivationTrace {
    input: Array2<f32>,
    outputs: Vec<Array2<f32>>,
    stamp: u64,
}

impl ActivationTrace {
    pub fn input(&self) -> &Array2<f32> {
        &self.input
    }

    pub fn layer(&self, layer: usize) -> &Array2<f32> {
        &self.outputs[layer]
    }

    pub fn outputs(&self) -> &[Array2<f32>] {
        &self.outputs
    }

    pub fn logits(&self) -> &Array2<f32> {
        self.outputs.last().expect("at least one layer")
    }

    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }

    pub fn num_layers(&self) -> usize {
        self.outputs.len()
    }

    /// Stamp of the network that produced the trace.
    pub fn stamp(&self) -> u64 {
        self.stamp
    }

    pub fn predictions(&self) -> Vec<usize> {
        argmax_rows(self.logits().view(), 0..self.logits().ncols())
    }
}

/// Per-hidden-layer keep flags used for masked inference.
///
/// `keep[l][n] == false` zeroes the post-activation output of neuron `n` of
/// hidden layer `l`. The output layer is never masked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeuronMask {
    pub keep: Vec<Vec<bool>>,
}

impl NeuronMask {
    pub fn all(net: &Network) -> Self {
        NeuronMask {
            keep: net.hidden_widths().into_iter().map(|w| vec![true; w]).collect(),
        }
    }

    pub fn none(net: &Network) -> Self {
        NeuronMask {
            keep: net.hidden_widths().into_iter().map(|w| vec![false; w]).collect(),
        }
    }

    pub fn retained(&self, layer: usize) -> Vec<usize> {
        self.keep[layer]
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| k.then_some(i))
            .collect()
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        let widths = net.hidden_widths();
        if self.keep.len() != widths.len() {
            return Err(Error::shape(format!(
                "mask covers {} hidden layers, network has {}",
                self.keep.len(),
                widths.len()
            )));
        }
        for (l, (k, &w)) in self.keep.iter().zip(&widths).enumerate() {
            if k.len() != w {
                return Err(Error::shape(format!(
                    "mask for hidden layer {l} has {} entries, layer has {w} neurons",
                    k.len()
                )));
            }
        }
        Ok(())
    }
}

/// Anything that can be turned into per-layer keep flags for a network.
pub trait KeepMask {
    fn neuron_mask(&self, net: &Network) -> Result<NeuronMask>;
}

impl KeepMask for NeuronMask {
    fn neuron_mask(&self, net: &Network) -> Result<NeuronMask> {
        self.validate(net)?;
        Ok(self.clone())
    }
}

pub fn forward(net: &Network, batch: ArrayView2<'_, f32>) -> Result<ActivationTrace> {
    check_input(net, batch)?;
    let outputs = propagate(net, batch, None);
    Ok(ActivationTrace {
        input: batch.to_owned(),
        outputs,
        stamp: net.stamp(),
    })
}

/// Logits only, without keeping the intermediate activations around.
pub fn logits(net: &Network, batch: ArrayView2<'_, f32>) -> Result<Array2<f32>> {
    check_input(net, batch)?;
    Ok(propagate(net, batch, None).pop().expect("at least one layer"))
}

pub fn predict(net: &Network, batch: ArrayView2<'_, f32>) -> Result<Vec<usize>> {
    let out = logits(net, batch)?;
    Ok(argmax_rows(out.view(), 0..out.ncols()))
}

/// Forward pass with the outputs of excluded hidden neurons zeroed.
pub fn mask_logits(
    net: &Network,
    batch: ArrayView2<'_, f32>,
    mask: &impl KeepMask,
) -> Result<Array2<f32>> {
    check_input(net, batch)?;
    let keep = mask.neuron_mask(net)?;
    Ok(propagate(net, batch, Some(&keep))
        .pop()
        .expect("at least one layer"))
}

pub fn mask_forward(
    net: &Network,
    batch: ArrayView2<'_, f32>,
    mask: &impl KeepMask,
) -> Result<Vec<usize>> {
    let out = mask_logits(net, batch, mask)?;
    Ok(argmax_rows(out.view(), 0..out.ncols()))
}

/// Argmax over a contiguous range of output units, optionally under a mask.
///
/// Returned ids are absolute output-unit indices.
pub fn predict_restricted(
    net: &Network,
    batch: ArrayView2<'_, f32>,
    units: std::ops::Range<usize>,
    mask: Option<&NeuronMask>,
) -> Result<Vec<usize>> {
    if units.is_empty() || units.end > net.num_categories() {
        return Err(Error::arg(format!(
            "output range {units:?} is empty or exceeds {} units",
            net.num_categories()
        )));
    }
    let out = match mask {
        Some(m) => mask_logits(net, batch, m)?,
        None => logits(net, batch)?,
    };
    Ok(argmax_rows(out.view(), units))
}

fn check_input(net: &Network, batch: ArrayView2<'_, f32>) -> Result<()> {
    if batch.ncols() != net.input_dim() {
        return Err(Error::InputShape {
            expected: net.input_dim(),
            actual: batch.ncols(),
        });
    }
    Ok(())
}

pub(crate) fn propagate(
    net: &Network,
    batch: ArrayView2<'_, f32>,
    keep: Option<&NeuronMask>,
) -> Vec<Array2<f32>> {
    let mut outputs: Vec<Array2<f32>> = Vec::with_capacity(net.num_layers());
    let hidden = net.num_hidden();
    for (l, layer) in net.layers().iter().enumerate() {
        let input = if l == 0 {
            batch
        } else {
            outputs[l - 1].view()
        };
        let mut z = input.dot(&layer.weights().t());
        z += &layer.biases().view().insert_axis(Axis(0));
        if layer.activation() == Activation::Relu {
            z.mapv_inplace(|v| v.max(0.0));
        }
        if let Some(mask) = keep {
            if l < hidden {
                for (n, &k) in mask.keep[l].iter().enumerate() {
                    if !k {
                        z.column_mut(n).fill(0.0);
                    }
                }
            }
        }
        outputs.push(z);
    }
    outputs
}

/// Row-wise argmax over `units`; ties resolve to the lowest unit index.
pub(crate) fn argmax_rows(values: ArrayView2<'_, f32>, units: std::ops::Range<usize>) -> Vec<usize> {
    values
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = units.start;
            for u in units.clone() {
                if row[u] > row[best] {
                    best = u;
                }
            }
            best
        })
        .collect()
}
