use ndarray::Axis;

use super::MaintenanceReport;
use crate::error::{Error, Result};
use crate::net::{DenseLayer, KeepMask, Network};

/// Deletes every excluded hidden neuron: its weight row and bias, and the
/// matching input column of the next layer.
///
/// The smaller network computes the same logits as masked inference on the
/// original. A hidden layer with no retained neuron is refused.
pub fn restructure(net: &Network, mask: &impl KeepMask) -> Result<(Network, MaintenanceReport)> {
    let keep = mask.neuron_mask(net)?;
    let mut layers = Vec::with_capacity(net.num_layers());
    let mut prev: Option<Vec<usize>> = None;
    for (l, layer) in net.layers().iter().enumerate() {
        let rows: Vec<usize> = if l < net.num_hidden() {
            let r = keep.retained(l);
            if r.is_empty() {
                return Err(Error::DegenerateLayer { layer: l });
            }
            r
        } else {
            (0..layer.out_dim()).collect()
        };
        let mut w = layer.weights().select(Axis(0), &rows);
        if let Some(cols) = &prev {
            w = w.select(Axis(1), cols);
        }
        let b = layer.biases().select(Axis(0), &rows);
        layers.push(DenseLayer::new(w, b, layer.activation())?);
        prev = Some(rows);
    }
    let small = Network::from_layers(layers, net.rng_seed())?;
    let mut report = MaintenanceReport::new("restructure", net.rng_seed());
    report.params_before = Some(net.param_count());
    report.params_after = Some(small.param_count());
    report.compression_rate = Some(1.0 - small.param_count() as f64 / net.param_count() as f64);
    Ok((small, report))
}
