use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::{evaluate, train_with, Network, TrainConfig, TrainHooks};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruneConfig {
    /// Fraction of the still-unpruned weights removed per round.
    pub rate: f64,
    /// Short retraining after each round.
    pub retrain: TrainConfig,
    pub max_rounds: usize,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            rate: 0.2,
            retrain: TrainConfig {
                epochs: 1,
                ..TrainConfig::default()
            },
            max_rounds: 50,
        }
    }
}

/// Weight-level pruning state: `keep[l][[r, c]] == false` pins a weight to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneState {
    pub net: Network,
    pub keep: Vec<Array2<bool>>,
}

impl PruneState {
    pub fn new(net: Network) -> Self {
        let keep = net
            .layers()
            .iter()
            .map(|l| Array2::from_elem(l.weights().dim(), true))
            .collect();
        PruneState { net, keep }
    }

    pub fn pruned(&self) -> usize {
        self.keep.iter().map(|k| k.iter().filter(|&&v| !v).count()).sum()
    }

    /// Live parameters: unpruned weights plus all biases.
    pub fn live_params(&self) -> usize {
        self.net.param_count() - self.pruned()
    }

    /// Zeroes the `count` smallest-magnitude live weights across all layers
    /// (ties by layer, row, column).
    pub fn prune_smallest(&mut self, count: usize) {
        let mut live: Vec<(f32, usize, usize, usize)> = Vec::new();
        for (l, layer) in self.net.layers().iter().enumerate() {
            for ((r, c), &w) in layer.weights().indexed_iter() {
                if self.keep[l][[r, c]] {
                    live.push((w.abs(), l, r, c));
                }
            }
        }
        let count = count.min(live.len());
        if count == 0 {
            return;
        }
        live.select_nth_unstable_by(count - 1, |a, b| {
            a.0.total_cmp(&b.0).then((a.1, a.2, a.3).cmp(&(b.1, b.2, b.3)))
        });
        for &(_, l, r, c) in &live[..count] {
            self.keep[l][[r, c]] = false;
            self.net.weights_mut(l)[[r, c]] = 0.0;
        }
    }
}

/// Result of iterative magnitude pruning.
#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub state: PruneState,
    /// Pruning rounds performed (the reverted round included).
    pub iterations: usize,
    /// `1 − live params / reference params`.
    pub sparsity: f64,
    pub accuracy: f64,
    pub reached_target: bool,
}

/// Iterative global magnitude pruning with short retraining rounds.
///
/// Sparsity is measured against `reference_params` (the parameter count of
/// the network before any restructuring), so a restructured network starts
/// part of the way to the target. A round whose accuracy on `validation`
/// falls below `accuracy_floor` is undone and pruning stops there.
pub fn magnitude_prune(
    net: &Network,
    reference_params: usize,
    target_sparsity: f64,
    accuracy_floor: f64,
    train_data: &Dataset,
    validation: &Dataset,
    cfg: &PruneConfig,
) -> Result<PruneOutcome> {
    if !(0.0..1.0).contains(&target_sparsity) {
        return Err(Error::arg(format!("target sparsity {target_sparsity} must lie in [0, 1)")));
    }
    if !(cfg.rate > 0.0 && cfg.rate <= 1.0) {
        return Err(Error::arg("prune rate must lie in (0, 1]"));
    }
    if reference_params < net.param_count() {
        return Err(Error::arg("reference parameter count is below the network's"));
    }
    let sparsity = |s: &PruneState| 1.0 - s.live_params() as f64 / reference_params as f64;
    let mut state = PruneState::new(net.clone());
    let mut accuracy = evaluate(&state.net, validation)?.accuracy;
    let mut iterations = 0;
    let allowed = ((1.0 - target_sparsity) * reference_params as f64).floor() as usize;

    while sparsity(&state) < target_sparsity - 1e-12 && iterations < cfg.max_rounds {
        let live_weights = state.net.param_count() - state.net.layers().iter().map(|l| l.out_dim()).sum::<usize>()
            - state.pruned();
        let needed = state.live_params().saturating_sub(allowed);
        let step = ((cfg.rate * live_weights as f64).ceil() as usize).min(needed);
        if step == 0 {
            break;
        }
        let before = state.clone();
        state.prune_smallest(step);
        let hooks = TrainHooks {
            weight_mask: Some(&state.keep),
            adversarial: None,
        };
        let retrain = TrainConfig {
            seed: cfg.retrain.seed.wrapping_add(iterations as u64),
            ..cfg.retrain.clone()
        };
        state.net = train_with(&state.net, train_data, &retrain, None, &hooks)?;
        iterations += 1;
        let acc = evaluate(&state.net, validation)?.accuracy;
        log::info!(
            "prune round {iterations}: sparsity {:.4}, accuracy {acc:.4}",
            sparsity(&state)
        );
        if acc < accuracy_floor {
            state = before;
            break;
        }
        accuracy = acc;
    }
    let s = sparsity(&state);
    Ok(PruneOutcome {
        reached_target: s >= target_sparsity - 1e-12,
        sparsity: s,
        accuracy,
        iterations,
        state,
    })
}
