use serde::{Deserialize, Serialize};

use crate::contribution::{ContributionMap, Metric, Scope};
use crate::data::{split_by_category, Dataset};
use crate::error::{Error, Result};
use crate::net::{evaluate, evaluate_by, mask_forward, Network};
use crate::slicing::band_mask;

/// Decile bands `(0, 0.1], (0.1, 0.2], …` up to `(0.4, 0.5]`.
pub fn default_bands() -> Vec<(f64, f64)> {
    (0..5).map(|i| (i as f64 / 10.0, (i + 1) as f64 / 10.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotRow {
    pub lo: f64,
    pub hi: f64,
    /// Whole-set accuracy (global scope) or mean of per-category accuracies.
    pub accuracy: f64,
    pub per_category: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotTable {
    pub metric: Metric,
    pub scope: Scope,
    pub baseline: f64,
    pub rows: Vec<PilotRow>,
}

impl PilotTable {
    /// True when some band hurts more than an earlier band.
    pub fn has_inversion(&self) -> bool {
        self.rows
            .windows(2)
            .any(|w| w[1].accuracy < w[0].accuracy)
    }
}

/// Accuracy after masking each score-rank band.
///
/// Global scope masks the band of the whole-set scores and evaluates on all
/// of `data`. Category scope masks, for each category, the band of that
/// category's scores, evaluates on that category's samples, and averages over
/// categories.
pub fn pilot_masking_eval(
    net: &Network,
    data: &Dataset,
    map: &ContributionMap,
    bands: &[(f64, f64)],
) -> Result<PilotTable> {
    let hidden = net.num_hidden();
    let mut rows = Vec::with_capacity(bands.len());
    let baseline;
    match map.scope {
        Scope::Global => {
            let scores: Vec<&[f64]> = (0..hidden)
                .map(|l| map.scores(l, None).ok_or_else(|| missing(l, None)))
                .collect::<Result<_>>()?;
            baseline = evaluate(net, data)?.accuracy;
            for &(lo, hi) in bands {
                let mask = band_mask(&scores, lo, hi)?;
                let acc = evaluate_by(net, data, |x| mask_forward(net, x, &mask))?;
                rows.push(PilotRow {
                    lo,
                    hi,
                    accuracy: acc.accuracy,
                    per_category: acc.per_category,
                });
            }
        }
        Scope::Category => {
            let views: Vec<(usize, Dataset)> = split_by_category(data)
                .into_iter()
                .filter_map(|v| v.dataset().map(|d| (v.category, d)))
                .collect();
            let mean = |v: &[Option<f64>]| {
                let p: Vec<f64> = v.iter().flatten().copied().collect();
                p.iter().sum::<f64>() / p.len().max(1) as f64
            };
            let mut base = vec![None; data.num_categories()];
            for (c, sub) in &views {
                base[*c] = Some(evaluate(net, sub)?.accuracy);
            }
            baseline = mean(&base);
            for &(lo, hi) in bands {
                let mut per = vec![None; data.num_categories()];
                for (c, sub) in &views {
                    let scores: Vec<&[f64]> = (0..hidden)
                        .map(|l| map.scores(l, Some(*c)).ok_or_else(|| missing(l, Some(*c))))
                        .collect::<Result<_>>()?;
                    let mask = band_mask(&scores, lo, hi)?;
                    per[*c] = Some(evaluate_by(net, sub, |x| mask_forward(net, x, &mask))?.accuracy);
                }
                rows.push(PilotRow {
                    lo,
                    hi,
                    accuracy: mean(&per),
                    per_category: per,
                });
            }
        }
    }
    Ok(PilotTable {
        metric: map.metric,
        scope: map.scope,
        baseline,
        rows,
    })
}

fn missing(layer: usize, category: Option<usize>) -> Error {
    Error::arg(format!("contribution map has no scores for layer {layer}, category {category:?}"))
}
