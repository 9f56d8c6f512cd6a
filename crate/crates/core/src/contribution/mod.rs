//! Per-neuron contribution scores, per category or over a whole dataset.

mod attribution;
mod stats;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{split_by_category, Dataset};
use crate::error::{Error, Result};
use crate::net::Network;

pub use attribution::{deeplift_score, taylor_score};
pub use stats::{avg_score, ens_score, var_score};

pub(crate) use attribution::{deeplift_all, taylor_all};
pub(crate) use stats::moments_all;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Avg,
    Var,
    Ens,
    #[serde(rename = "deeplift")]
    DeepLift,
    Taylor,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Avg,
        Metric::Var,
        Metric::Ens,
        Metric::DeepLift,
        Metric::Taylor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Avg => "avg",
            Metric::Var => "var",
            Metric::Ens => "ens",
            Metric::DeepLift => "deeplift",
            Metric::Taylor => "taylor",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownMetric(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Global,
    Category,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Global => "global",
            Scope::Category => "category",
        })
    }
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "global" => Ok(Scope::Global),
            "category" | "per-category" => Ok(Scope::Category),
            _ => Err(Error::arg(format!("unknown scope `{s}` (expected global or category)"))),
        }
    }
}

/// Identifies the data a map was computed on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub name: String,
    pub size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Scores of one hidden layer for one category (`None` means the whole set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerScores {
    pub layer: usize,
    pub category: Option<usize>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionMap {
    pub metric: Metric,
    pub scope: Scope,
    pub layers: Vec<LayerScores>,
    pub dataset: Fingerprint,
}

impl ContributionMap {
    pub fn scores(&self, layer: usize, category: Option<usize>) -> Option<&[f64]> {
        self.layers
            .iter()
            .find(|s| s.layer == layer && s.category == category)
            .map(|s| s.scores.as_slice())
    }

    /// Categories with scores, ascending (empty for a global map).
    pub fn categories(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.layers.iter().filter_map(|s| s.category).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn num_layers(&self) -> usize {
        self.layers.iter().map(|s| s.layer + 1).max().unwrap_or(0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Scores of every hidden layer over the whole of `data`.
pub fn layer_scores(net: &Network, data: &Dataset, metric: Metric) -> Result<Vec<Vec<f64>>> {
    if data.dim() != net.input_dim() {
        return Err(Error::InputShape {
            expected: net.input_dim(),
            actual: data.dim(),
        });
    }
    if data.num_categories() > net.num_categories() {
        return Err(Error::arg(format!(
            "dataset declares {} categories, network has {} outputs",
            data.num_categories(),
            net.num_categories()
        )));
    }
    match metric {
        Metric::Avg => Ok(moments_all(net, data.inputs().view())?.0),
        Metric::Var => Ok(moments_all(net, data.inputs().view())?.1),
        Metric::Ens => {
            let (avg, var) = moments_all(net, data.inputs().view())?;
            avg.iter().zip(&var).map(|(a, v)| ens_score(a, v)).collect()
        }
        Metric::DeepLift => deeplift_all(net, data.inputs().view(), None),
        Metric::Taylor => taylor_all(net, data.inputs().view(), data.labels()),
    }
}

/// Contribution map for every hidden layer, over the whole dataset
/// ([`Scope::Global`]) or separately for each non-empty category.
pub fn contribution(
    net: &Network,
    data: &Dataset,
    metric: Metric,
    scope: Scope,
) -> Result<ContributionMap> {
    let mut layers = Vec::new();
    match scope {
        Scope::Global => {
            for (l, scores) in layer_scores(net, data, metric)?.into_iter().enumerate() {
                layers.push(LayerScores {
                    layer: l,
                    category: None,
                    scores,
                });
            }
        }
        Scope::Category => {
            for view in split_by_category(data) {
                let Some(sub) = view.dataset() else { continue };
                for (l, scores) in layer_scores(net, &sub, metric)?.into_iter().enumerate() {
                    layers.push(LayerScores {
                        layer: l,
                        category: Some(view.category),
                        scores,
                    });
                }
            }
            layers.sort_by_key(|s| (s.layer, s.category));
        }
    }
    Ok(ContributionMap {
        metric,
        scope,
        layers,
        dataset: Fingerprint {
            name: data.name().to_string(),
            size: data.len(),
            seed: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::net::forward;

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.as_str().parse::<Metric>().unwrap(), m);
            let j = serde_json::to_string(&m).unwrap();
            assert_eq!(j, format!("\"{}\"", m.as_str()));
        }
        assert!(matches!("grad".parse::<Metric>(), Err(Error::UnknownMetric(_))));
    }

    #[test]
    fn global_equals_category_on_single_category_data() {
        let data = synth_blobs(1, 20, 4, 0.1, 3).unwrap();
        let net = Network::new(&[4, 6, 5, 1], 2).unwrap();
        for m in Metric::ALL {
            let g = contribution(&net, &data, m, Scope::Global).unwrap();
            let c = contribution(&net, &data, m, Scope::Category).unwrap();
            for l in 0..2 {
                assert_eq!(g.scores(l, None).unwrap(), c.scores(l, Some(0)).unwrap());
            }
        }
    }

    #[test]
    fn map_covers_layers_and_categories() {
        let data = synth_blobs(3, 10, 4, 0.1, 3).unwrap();
        let net = Network::new(&[4, 6, 5, 3], 2).unwrap();
        let map = contribution(&net, &data, Metric::Taylor, Scope::Category).unwrap();
        assert_eq!(map.layers.len(), 2 * 3);
        assert_eq!(map.categories(), vec![0, 1, 2]);
        assert_eq!(map.scores(0, Some(2)).unwrap().len(), 6);
        assert_eq!(map.scores(1, Some(0)).unwrap().len(), 5);
        assert!(map.layers.iter().all(|s| s.scores.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn avg_map_matches_direct_recount() {
        let data = synth_blobs(2, 15, 3, 0.2, 8).unwrap();
        let net = Network::new(&[3, 7, 2], 5).unwrap();
        let map = contribution(&net, &data, Metric::Avg, Scope::Category).unwrap();
        let trace = forward(&net, data.inputs().view()).unwrap();
        for c in 0..2 {
            let rows: Vec<usize> = (0..data.len()).filter(|&i| data.labels()[i] == c).collect();
            for n in 0..7 {
                let mut s = 0.0f64;
                for &i in &rows {
                    s += trace.layer(0)[[i, n]] as f64;
                }
                let want = s / rows.len() as f64;
                let got = map.scores(0, Some(c)).unwrap()[n];
                assert!((want - got).abs() <= 1e-6 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn json_shape() {
        let data = synth_blobs(2, 4, 3, 0.2, 8).unwrap();
        let net = Network::new(&[3, 2, 2], 5).unwrap();
        let map = contribution(&net, &data, Metric::Var, Scope::Global).unwrap();
        let v: serde_json::Value = serde_json::from_str(&map.to_json().unwrap()).unwrap();
        assert_eq!(v["metric"], "var");
        assert_eq!(v["scope"], "global");
        assert_eq!(v["layers"][0]["layer"], 0);
        assert!(v["layers"][0]["category"].is_null());
        assert_eq!(v["layers"][0]["scores"].as_array().unwrap().len(), 2);
        assert_eq!(ContributionMap::from_json(&map.to_json().unwrap()).unwrap(), map);
    }
}
