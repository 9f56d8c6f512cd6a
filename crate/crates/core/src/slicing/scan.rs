use ndarray::ArrayView2;

use super::gram::{cka, cka_centered, gram, gram_add_in_place};
use crate::error::{Error, Result};

/// Neuron indices by descending score; ties go to the lower index.
pub fn rank_neurons(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// The `k` highest-scored indices, ascending.
pub fn topk_select(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(Error::arg(format!(
            "cannot select {k} of {} neurons",
            scores.len()
        )));
    }
    let mut top = rank_neurons(scores);
    top.truncate(k);
    top.sort_unstable();
    Ok(top)
}

/// `⌈f·n⌉`, robust to representation error in `f` (0.3·10 is 3, not 4).
pub fn fraction_count(fraction: f64, n: usize) -> usize {
    let raw = fraction * n as f64;
    let rounded = raw.round();
    let c = if (raw - rounded).abs() <= 1e-9 * raw.abs().max(1.0) {
        rounded
    } else {
        raw.ceil()
    };
    (c.max(0.0) as usize).min(n)
}

/// Outcome of one linear scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    /// Retained neurons in rank order (a prefix of [`rank_neurons`]).
    pub retained: Vec<usize>,
    /// Similarity of the retained set to the full layer.
    pub similarity: f64,
    /// Number of similarity checks performed.
    pub steps: usize,
}

/// Grows a score-ranked prefix `interval` neurons at a time until the Gram
/// matrix of the prefix reaches similarity `theta` with the full layer.
///
/// `acts` are the layer's activations on one category's samples. The empty
/// set has similarity 0 and the full layer similarity 1, so the scan always
/// adds at least one step and always stops.
pub fn linear_scan(
    acts: ArrayView2<'_, f32>,
    scores: &[f64],
    theta: f64,
    interval: usize,
    centered: bool,
) -> Result<ScanResult> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::arg(format!("theta {theta} must lie in (0, 1)")));
    }
    if interval == 0 {
        return Err(Error::arg("scan interval must be at least 1"));
    }
    if acts.nrows() == 0 {
        return Err(Error::arg("no samples for this category"));
    }
    let n = acts.ncols();
    if scores.len() != n {
        return Err(Error::shape(format!(
            "{} scores for a layer of {n} neurons",
            scores.len()
        )));
    }
    let order = rank_neurons(scores);
    let all: Vec<usize> = (0..n).collect();
    let full = gram(acts, 0, &all)?;
    let mut m = gram(acts, 0, &[])?;
    let mut taken = 0;
    let mut sim = 0.0;
    let mut steps = 0;
    while sim < theta && taken < n {
        let next = (taken + interval).min(n);
        gram_add_in_place(&mut m, acts, &order[taken..next])?;
        taken = next;
        steps += 1;
        sim = if taken == n {
            1.0
        } else if centered {
            cka_centered(&m, &full)?
        } else {
            cka(&m, &full)?
        };
    }
    Ok(ScanResult {
        retained: order[..taken].to_vec(),
        similarity: sim,
        steps,
    })
}
