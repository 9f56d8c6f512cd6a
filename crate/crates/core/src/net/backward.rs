use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{ActivationTrace, Activation, Network};
use crate::error::{Error, Result};

/// Gradients of the mean softmax cross-entropy loss.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f32>>,
    pub biases: Vec<Array1<f32>>,
    /// `activations[l]` is dL/d(post-activation of layer l), `[batch × out_dim]`.
    pub activations: Vec<Array2<f32>>,
    /// dL/d(input), present when requested.
    pub input: Option<Array2<f32>>,
    pub loss: f64,
}

pub fn backward(net: &Network, trace: &ActivationTrace, labels: &[usize]) -> Result<Gradients> {
    if trace.stamp() != net.stamp() {
        return Err(Error::StaleTrace);
    }
    backward_raw(
        net,
        trace.input().view(),
        trace.outputs(),
        labels,
        1.0,
        true,
    )
}

/// Backward pass over raw activations.
///
/// `scale` multiplies the loss (and so every gradient); `scale = batch` turns
/// the mean loss into a per-sample sum.
pub(crate) fn backward_raw(
    net: &Network,
    input: ArrayView2<'_, f32>,
    outputs: &[Array2<f32>],
    labels: &[usize],
    scale: f32,
    want_input: bool,
) -> Result<Gradients> {
    let batch = input.nrows();
    if labels.len() != batch {
        return Err(Error::shape(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    let classes = net.num_categories();
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::arg(format!(
            "label {bad} outside [0, {classes})"
        )));
    }
    if batch == 0 {
        return Err(Error::arg("empty batch"));
    }

    let logits = outputs.last().expect("at least one layer");
    let (loss, mut dz) = softmax_xent(logits.view(), labels, scale);

    let nl = net.num_layers();
    let mut weights = vec![Array2::zeros((0, 0)); nl];
    let mut biases = vec![Array1::zeros(0); nl];
    let mut activations = vec![Array2::zeros((0, 0)); nl];
    let mut input_grad = None;

    for l in (0..nl).rev() {
        let layer = net.layer(l);
        if layer.activation() == Activation::Relu {
            // dz currently holds dL/da for this layer
            activations[l] = dz.clone();
            ndarray::Zip::from(&mut dz)
                .and(&outputs[l])
                .for_each(|g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
        } else {
            activations[l] = dz.clone();
        }
        let prev = if l == 0 { input } else { outputs[l - 1].view() };
        weights[l] = dz.t().dot(&prev);
        biases[l] = dz.sum_axis(Axis(0));
        if l > 0 || want_input {
            let da = dz.dot(layer.weights());
            if l == 0 {
                input_grad = Some(da);
                break;
            }
            dz = da;
        }
    }

    Ok(Gradients {
        weights,
        biases,
        activations,
        input: input_grad,
        loss,
    })
}

/// Mean softmax cross-entropy and its gradient w.r.t. the logits.
fn softmax_xent(logits: ArrayView2<'_, f32>, labels: &[usize], scale: f32) -> (f64, Array2<f32>) {
    let batch = logits.nrows();
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0f64;
    let inv = f64::from(scale) / batch as f64;
    for (i, (row, &y)) in logits.rows().into_iter().zip(labels).enumerate() {
        let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
        let sum: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - row[y] as f64;
        for (c, &v) in row.iter().enumerate() {
            let p = (v as f64 - log_z).exp();
            let target = if c == y { 1.0 } else { 0.0 };
            grad[[i, c]] = ((p - target) * inv) as f32;
        }
    }
    (total / batch as f64 * f64::from(scale), grad)
}
