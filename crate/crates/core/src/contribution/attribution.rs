//! Gradient-based scores: DeepLIFT (Rescale rule) and first-order Taylor.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

use super::stats::CHUNK;
use crate::error::{Error, Result};
use crate::net::{argmax_rows, backward_raw, propagate, Activation, Network};

/// Below this |Δz| the Rescale multiplier falls back to the local gradient.
const RESCALE_EPS: f64 = 1e-7;

fn hidden_layer(net: &Network, layer: usize) -> Result<()> {
    if layer >= net.num_hidden() {
        return Err(Error::arg(format!(
            "layer {layer} is not a hidden layer (network has {})",
            net.num_hidden()
        )));
    }
    Ok(())
}

fn check_inputs(net: &Network, inputs: &ArrayView2<'_, f32>) -> Result<()> {
    if inputs.ncols() != net.input_dim() {
        return Err(Error::InputShape {
            expected: net.input_dim(),
            actual: inputs.ncols(),
        });
    }
    if inputs.nrows() == 0 {
        return Err(Error::arg("contribution scores need at least one sample"));
    }
    Ok(())
}

struct Pass64 {
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

fn forward64(layers: &[(Array2<f64>, Array1<f64>, Activation)], x: Array2<f64>) -> Pass64 {
    let mut pre = Vec::with_capacity(layers.len());
    let mut post: Vec<Array2<f64>> = Vec::with_capacity(layers.len());
    for (l, (w, b, act)) in layers.iter().enumerate() {
        let input = if l == 0 { x.view() } else { post[l - 1].view() };
        let z = input.dot(&w.t()) + b.view().insert_axis(Axis(0));
        let a = match act {
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::Identity => z.clone(),
        };
        pre.push(z);
        post.push(a);
    }
    Pass64 { pre, post }
}

/// Mean absolute DeepLIFT contribution of every hidden neuron to the
/// predicted-class logit, for every hidden layer.
///
/// `reference` defaults to the all-zero input.
pub(crate) fn deeplift_all(
    net: &Network,
    inputs: ArrayView2<'_, f32>,
    reference: Option<&[f32]>,
) -> Result<Vec<Vec<f64>>> {
    let mut sums: Vec<Array1<f64>> = net.hidden_widths().into_iter().map(Array1::zeros).collect();
    deeplift_visit(net, inputs, reference, |l, contrib| {
        sums[l] += &contrib.mapv(f64::abs).sum_axis(Axis(0));
    })?;
    let n = inputs.nrows() as f64;
    Ok(sums.into_iter().map(|s| s.iter().map(|v| v / n).collect()).collect())
}

/// Feeds the signed per-sample contributions `[chunk × width]` of each hidden
/// layer to `visit`.
fn deeplift_visit(
    net: &Network,
    inputs: ArrayView2<'_, f32>,
    reference: Option<&[f32]>,
    mut visit: impl FnMut(usize, &Array2<f64>),
) -> Result<()> {
    check_inputs(net, &inputs)?;
    let d = net.input_dim();
    let reference: Vec<f64> = match reference {
        Some(r) if r.len() != d => {
            return Err(Error::InputShape {
                expected: d,
                actual: r.len(),
            })
        }
        Some(r) => r.iter().map(|&v| f64::from(v)).collect(),
        None => vec![0.0; d],
    };
    let layers: Vec<(Array2<f64>, Array1<f64>, Activation)> = net
        .layers()
        .iter()
        .map(|l| {
            (
                l.weights().mapv(f64::from),
                l.biases().mapv(f64::from),
                l.activation(),
            )
        })
        .collect();
    let ref_pass = forward64(&layers, Array2::from_shape_vec((1, d), reference).expect("1×d"));
    let hidden = net.num_hidden();
    for start in (0..inputs.nrows()).step_by(CHUNK) {
        let end = (start + CHUNK).min(inputs.nrows());
        let x = inputs.slice(s![start..end, ..]).mapv(f64::from);
        let pass = forward64(&layers, x);
        let logits = pass.post.last().expect("output layer").mapv(|v| v as f32);
        let target = argmax_rows(logits.view(), 0..logits.ncols());

        // multiplier of the target logit with respect to the output pre-activation
        let mut m_z = Array2::<f64>::zeros((end - start, net.num_categories()));
        for (i, &c) in target.iter().enumerate() {
            m_z[[i, c]] = 1.0;
        }
        for l in (0..hidden).rev() {
            let m_a = m_z.dot(&layers[l + 1].0);
            let delta_a = &pass.post[l] - &ref_pass.post[l].row(0);
            visit(l, &(&delta_a * &m_a));
            m_z = match layers[l].2 {
                Activation::Identity => m_a,
                Activation::Relu => {
                    let mut r = m_a;
                    let z_ref = ref_pass.pre[l].row(0);
                    Zip::from(r.rows_mut())
                        .and(pass.pre[l].rows())
                        .for_each(|mut row, z| {
                            for ((m, &zv), &zr) in row.iter_mut().zip(z.iter()).zip(z_ref.iter()) {
                                let dz = zv - zr;
                                let slope = if dz.abs() > RESCALE_EPS {
                                    (zv.max(0.0) - zr.max(0.0)) / dz
                                } else if zv > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                };
                                *m *= slope;
                            }
                        });
                    r
                }
            };
        }
    }
    Ok(())
}

pub fn deeplift_score(
    net: &Network,
    inputs: ArrayView2<'_, f32>,
    layer: usize,
    reference: Option<&[f32]>,
) -> Result<Vec<f64>> {
    hidden_layer(net, layer)?;
    Ok(deeplift_all(net, inputs, reference)?.swap_remove(layer))
}

/// Mean over samples of `|a_n(x) · ∂L(x)/∂a_n(x)|` for every hidden layer,
/// with `L(x)` the per-sample cross-entropy.
pub(crate) fn taylor_all(
    net: &Network,
    inputs: ArrayView2<'_, f32>,
    labels: &[usize],
) -> Result<Vec<Vec<f64>>> {
    check_inputs(net, &inputs)?;
    if labels.len() != inputs.nrows() {
        return Err(Error::shape(format!(
            "{} labels for {} samples",
            labels.len(),
            inputs.nrows()
        )));
    }
    let hidden = net.num_hidden();
    let mut sums: Vec<Array1<f64>> = net.hidden_widths().into_iter().map(Array1::zeros).collect();
    for start in (0..inputs.nrows()).step_by(CHUNK) {
        let end = (start + CHUNK).min(inputs.nrows());
        let x = inputs.slice(s![start..end, ..]);
        let outs = propagate(net, x, None);
        let g = backward_raw(net, x, &outs, &labels[start..end], (end - start) as f32, false)?;
        for l in 0..hidden {
            for (a_row, g_row) in outs[l].rows().into_iter().zip(g.activations[l].rows()) {
                for ((s, &a), &gv) in sums[l].iter_mut().zip(a_row.iter()).zip(g_row.iter()) {
                    *s += (f64::from(a) * f64::from(gv)).abs();
                }
            }
        }
    }
    let n = inputs.nrows() as f64;
    Ok(sums.into_iter().map(|s| s.iter().map(|v| v / n).collect()).collect())
}

pub fn taylor_score(
    net: &Network,
    inputs: ArrayView2<'_, f32>,
    labels: &[usize],
    layer: usize,
) -> Result<Vec<f64>> {
    hidden_layer(net, layer)?;
    Ok(taylor_all(net, inputs, labels)?.swap_remove(layer))
}
