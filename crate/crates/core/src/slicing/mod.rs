//! Semantic slicing: Gram matrices, similarity, and neuron selection.

mod gram;
mod layers;
mod scan;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::contribution::{contribution, ContributionMap, Metric, Scope};
use crate::data::{split_by_category, Dataset};
use crate::error::{Error, Result};
use crate::net::{propagate, KeepMask, Network, NeuronMask};

pub use gram::{cka, cka_centered, gram, gram_add, GramMatrix};
pub use layers::{layer_similarity, LayerSimilarity, REDUNDANCY_THRESHOLD};
pub use scan::{fraction_count, linear_scan, rank_neurons, topk_select, ScanResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    GlobalTopk,
    CategoryTopk,
    Semantic,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::GlobalTopk, Strategy::CategoryTopk, Strategy::Semantic];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::GlobalTopk => "global-topk",
            Strategy::CategoryTopk => "category-topk",
            Strategy::Semantic => "semantic",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown strategy `{s}`")))
    }
}

/// Scan step: a fixed neuron count or `auto` (`max(1, ⌈width/20⌉)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interval {
    #[default]
    Auto,
    Fixed(usize),
}

impl Interval {
    pub fn resolve(self, width: usize) -> usize {
        match self {
            Interval::Auto => width.div_ceil(20).max(1),
            Interval::Fixed(i) => i,
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Interval::Auto => f.write_str("auto"),
            Interval::Fixed(i) => write!(f, "{i}"),
        }
    }
}

impl FromStr for Interval {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Interval::Auto);
        }
        match s.parse::<usize>() {
            Ok(i) if i >= 1 => Ok(Interval::Fixed(i)),
            _ => Err(Error::arg(format!("interval must be `auto` or a positive integer, got `{s}`"))),
        }
    }
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Interval::Auto => s.serialize_str("auto"),
            Interval::Fixed(i) => s.serialize_u64(*i as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(0) => Err(serde::de::Error::custom("interval must be at least 1")),
            Raw::N(n) => Ok(Interval::Fixed(n as usize)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SliceConfig {
    pub strategy: Strategy,
    pub metric: Metric,
    /// Similarity threshold of the semantic scan, in (0, 1).
    pub theta: f64,
    pub interval: Interval,
    /// Samples per category used for Gram matrices.
    pub sample_cap: usize,
    /// Kept fraction per layer for the top-k strategies, in (0, 1].
    pub fraction: f64,
    /// Compare double-centered Gram matrices instead of raw ones.
    pub centered: bool,
    pub seed: u64,
}

impl Default for SliceConfig {
    fn default() -> Self {
        SliceConfig {
            strategy: Strategy::Semantic,
            metric: Metric::DeepLift,
            theta: 0.95,
            interval: Interval::Auto,
            sample_cap: 256,
            fraction: 0.5,
            centered: false,
            seed: 0,
        }
    }
}

impl SliceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Config(format!("theta {} must lie in (0, 1)", self.theta)));
        }
        if self.sample_cap < 2 {
            return Err(Error::Config("sample_cap must be at least 2".into()));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Config(format!("fraction {} must lie in (0, 1]", self.fraction)));
        }
        Ok(())
    }
}

/// Retained neurons of one hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSlice {
    pub layer: usize,
    pub width: usize,
    /// Ascending neuron indices.
    pub retained: Vec<usize>,
    /// Per-category components (ascending), kept for audit.
    #[serde(default)]
    pub per_category: BTreeMap<usize, Vec<usize>>,
    /// Resolved scan step, for the semantic strategy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceMask {
    pub strategy: Strategy,
    pub metric: Metric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<Interval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    pub layers: Vec<LayerSlice>,
}

impl SliceMask {
    pub fn retained(&self, layer: usize) -> &[usize] {
        &self.layers[layer].retained
    }

    pub fn num_retained(&self) -> usize {
        self.layers.iter().map(|l| l.retained.len()).sum()
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        let widths = net.hidden_widths();
        if self.layers.len() != widths.len() {
            return Err(Error::shape(format!(
                "slice covers {} hidden layers, network has {}",
                self.layers.len(),
                widths.len()
            )));
        }
        for (l, (s, &w)) in self.layers.iter().zip(&widths).enumerate() {
            if s.layer != l || s.width != w {
                return Err(Error::shape(format!(
                    "slice entry {l} describes layer {} of width {}, network layer is {w} wide",
                    s.layer, s.width
                )));
            }
            let mut seen = vec![false; w];
            for &n in s.retained.iter().chain(s.per_category.values().flatten()) {
                if n >= w {
                    return Err(Error::shape(format!("neuron {n} outside layer {l} of width {w}")));
                }
            }
            for &n in &s.retained {
                if std::mem::replace(&mut seen[n], true) {
                    return Err(Error::arg(format!("neuron {n} retained twice in layer {l}")));
                }
            }
        }
        Ok(())
    }

    /// Keep flags for masked inference.
    pub fn to_neuron_mask(&self) -> NeuronMask {
        NeuronMask {
            keep: self
                .layers
                .iter()
                .map(|s| {
                    let mut k = vec![false; s.width];
                    for &n in &s.retained {
                        k[n] = true;
                    }
                    k
                })
                .collect(),
        }
    }

    /// Parameter count of the network restructured to this slice.
    pub fn retained_params(&self, net: &Network) -> usize {
        let mut prev = net.input_dim();
        let mut total = 0;
        for s in &self.layers {
            let k = s.retained.len();
            total += k * (prev + 1);
            prev = k;
        }
        total + net.num_categories() * (prev + 1)
    }

    /// `1 − params(restructured) / params(original)`.
    pub fn compression_rate(&self, net: &Network) -> f64 {
        1.0 - self.retained_params(net) as f64 / net.param_count() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl KeepMask for SliceMask {
    fn neuron_mask(&self, net: &Network) -> Result<NeuronMask> {
        self.validate(net)?;
        Ok(self.to_neuron_mask())
    }
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

fn union(parts: &BTreeMap<usize, Vec<usize>>, width: usize) -> Vec<usize> {
    let mut keep = vec![false; width];
    for &n in parts.values().flatten() {
        keep[n] = true;
    }
    (0..width).filter(|&n| keep[n]).collect()
}

/// Slices `net` as configured, scoring neurons on `data`.
pub fn slice(net: &Network, data: &Dataset, cfg: &SliceConfig) -> Result<SliceMask> {
    cfg.validate()?;
    match cfg.strategy {
        Strategy::Semantic => semantic_slice(net, data, cfg),
        Strategy::GlobalTopk => {
            let map = contribution(net, data, cfg.metric, Scope::Global)?;
            baseline_slice(net, &map, cfg.fraction)
        }
        Strategy::CategoryTopk => {
            let map = contribution(net, data, cfg.metric, Scope::Category)?;
            baseline_slice(net, &map, cfg.fraction)
        }
    }
}

/// Per-category linear scans over every hidden layer, unioned per layer.
///
/// Scores come from all of `data`; Gram matrices use at most
/// `cfg.sample_cap` seeded samples per category.
pub fn semantic_slice(net: &Network, data: &Dataset, cfg: &SliceConfig) -> Result<SliceMask> {
    cfg.validate()?;
    let map = contribution(net, data, cfg.metric, Scope::Category)?;
    semantic_slice_with(net, data, &map, cfg)
}

/// [`semantic_slice`] with precomputed per-category scores.
pub fn semantic_slice_with(
    net: &Network,
    data: &Dataset,
    map: &ContributionMap,
    cfg: &SliceConfig,
) -> Result<SliceMask> {
    cfg.validate()?;
    if map.scope != Scope::Category {
        return Err(Error::arg("semantic slicing needs per-category scores"));
    }
    let widths = net.hidden_widths();
    let sample = data.sample_per_category(cfg.sample_cap, cfg.seed);
    let mut parts: Vec<BTreeMap<usize, Vec<usize>>> = vec![BTreeMap::new(); widths.len()];
    for view in split_by_category(&sample) {
        let Some(sub) = view.dataset() else { continue };
        let outs = propagate(net, sub.inputs().view(), None);
        for (l, &w) in widths.iter().enumerate() {
            let wrap = |e: Error| Error::Slice {
                layer: l,
                category: view.category,
                source: Box::new(e),
            };
            let scores = map
                .scores(l, Some(view.category))
                .ok_or_else(|| wrap(Error::arg("no scores for this layer and category")))?;
            let r = linear_scan(
                outs[l].view(),
                scores,
                cfg.theta,
                cfg.interval.resolve(w),
                cfg.centered,
            )
            .map_err(wrap)?;
            parts[l].insert(view.category, sorted(r.retained));
        }
    }
    let layers = parts
        .into_iter()
        .zip(&widths)
        .enumerate()
        .map(|(l, (per_category, &w))| LayerSlice {
            layer: l,
            width: w,
            retained: union(&per_category, w),
            per_category,
            interval: Some(cfg.interval.resolve(w)),
        })
        .collect();
    Ok(SliceMask {
        strategy: Strategy::Semantic,
        metric: map.metric,
        theta: Some(cfg.theta),
        interval: Some(cfg.interval),
        fraction: None,
        layers,
    })
}

/// Top-`⌈fraction·width⌉` neurons per layer: from whole-dataset scores for a
/// global map, or per category and then unioned for a per-category map.
pub fn baseline_slice(net: &Network, map: &ContributionMap, fraction: f64) -> Result<SliceMask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::arg(format!("fraction {fraction} must lie in (0, 1]")));
    }
    let widths = net.hidden_widths();
    let mut layers = Vec::with_capacity(widths.len());
    for (l, &w) in widths.iter().enumerate() {
        let k = fraction_count(fraction, w);
        let mut per_category = BTreeMap::new();
        let retained = match map.scope {
            Scope::Global => {
                let s = map
                    .scores(l, None)
                    .ok_or_else(|| Error::arg(format!("no global scores for layer {l}")))?;
                check_width(s, w, l)?;
                topk_select(s, k)?
            }
            Scope::Category => {
                for c in map.categories() {
                    let s = map.scores(l, Some(c)).ok_or_else(|| {
                        Error::arg(format!("no scores for layer {l}, category {c}"))
                    })?;
                    check_width(s, w, l)?;
                    per_category.insert(c, topk_select(s, k)?);
                }
                union(&per_category, w)
            }
        };
        layers.push(LayerSlice {
            layer: l,
            width: w,
            retained,
            per_category,
            interval: None,
        });
    }
    Ok(SliceMask {
        strategy: match map.scope {
            Scope::Global => Strategy::GlobalTopk,
            Scope::Category => Strategy::CategoryTopk,
        },
        metric: map.metric,
        theta: None,
        interval: None,
        fraction: Some(fraction),
        layers,
    })
}

fn check_width(scores: &[f64], width: usize, layer: usize) -> Result<()> {
    if scores.len() != width {
        return Err(Error::shape(format!(
            "layer {layer} has {width} neurons but {} scores",
            scores.len()
        )));
    }
    Ok(())
}

/// Masks, in every layer, the neurons whose score rank falls in the band
/// `(lo, hi]`: rank positions `⌈lo·n⌉ .. ⌈hi·n⌉` of [`rank_neurons`].
pub fn band_mask(layer_scores: &[&[f64]], lo: f64, hi: f64) -> Result<NeuronMask> {
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(Error::arg(format!("invalid band ({lo}, {hi}]")));
    }
    Ok(NeuronMask {
        keep: layer_scores
            .iter()
            .map(|s| {
                let order = rank_neurons(s);
                let n = s.len();
                let mut keep = vec![true; n];
                for &i in &order[fraction_count(lo, n)..fraction_count(hi, n)] {
                    keep[i] = false;
                }
                keep
            })
            .collect(),
    })
}
