use serde::{Deserialize, Serialize};

use super::gram::{cka, gram, GramMatrix};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::{propagate, Network};

/// Consecutive layers more similar than this are reported as redundant.
pub const REDUNDANCY_THRESHOLD: f64 = 0.99;

/// Pairwise similarity of whole-layer Gram matrices (hidden and output).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSimilarity {
    pub matrix: Vec<Vec<f64>>,
    pub threshold: f64,
    /// Consecutive pairs `(l, l + 1)` whose similarity exceeds the threshold.
    pub redundant: Vec<(usize, usize)>,
}

pub fn layer_similarity(net: &Network, data: &Dataset, threshold: f64) -> Result<LayerSimilarity> {
    if data.dim() != net.input_dim() {
        return Err(Error::InputShape {
            expected: net.input_dim(),
            actual: data.dim(),
        });
    }
    let outs = propagate(net, data.inputs().view(), None);
    let grams: Vec<GramMatrix> = outs
        .iter()
        .enumerate()
        .map(|(l, a)| gram(a.view(), l, &(0..a.ncols()).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    let n = grams.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = if i == j && !grams[i].is_zero() {
                1.0
            } else {
                cka(&grams[i], &grams[j])?
            };
            matrix[i][j] = v;
            matrix[j][i] = v;
        }
    }
    let redundant = (0..n.saturating_sub(1))
        .filter(|&l| matrix[l][l + 1] > threshold)
        .map(|l| (l, l + 1))
        .collect();
    Ok(LayerSimilarity {
        matrix,
        threshold,
        redundant,
    })
}
