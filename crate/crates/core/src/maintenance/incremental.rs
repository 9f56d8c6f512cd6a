use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::MaintenanceReport;
use crate::data::{replay_mix, shift_labels, Dataset, TaskSplit};
use crate::error::{Error, Result};
use crate::net::{
    argmax_rows, evaluate, evaluate_by, mask_logits, propagate, train, KeepMask, Network,
    NeuronMask, ParamMask, TrainConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    A,
    B,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::A => "A",
            Task::B => "B",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Task::A),
            "B" | "b" => Ok(Task::B),
            _ => Err(Error::arg(format!("unknown task tag `{s}` (expected A or B)"))),
        }
    }
}

/// Task-local predictions of a network whose first `a_units` outputs belong
/// to task A and the rest to task B.
///
/// Task A runs with every non-retained hidden neuron zeroed and takes the
/// argmax over the A units; task B runs the full network and takes the argmax
/// over the B units (returned relative to the first B unit).
pub fn dual_inference(
    net: &Network,
    mask_a: &NeuronMask,
    a_units: usize,
    x: ArrayView2<'_, f32>,
    task: Task,
) -> Result<Vec<usize>> {
    let k = net.num_categories();
    if a_units == 0 || a_units >= k {
        return Err(Error::arg(format!(
            "{a_units} task-A units leave no room for task B in {k} outputs"
        )));
    }
    match task {
        Task::A => {
            let out = mask_logits(net, x, mask_a)?;
            Ok(argmax_rows(out.view(), 0..a_units))
        }
        Task::B => {
            let out = crate::net::logits(net, x)?;
            Ok(argmax_rows(out.view(), a_units..k)
                .into_iter()
                .map(|u| u - a_units)
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IncrementalConfig {
    pub train: TrainConfig,
    /// Fraction of task-A training rows mixed into task-B training.
    pub replay_fraction: f64,
    pub seed: u64,
}

impl Default for IncrementalConfig {
    fn default() -> Self {
        IncrementalConfig {
            train: TrainConfig::default(),
            replay_fraction: 0.0,
            seed: 0,
        }
    }
}

fn training_set(split: &TaskSplit, cfg: &IncrementalConfig) -> Result<Dataset> {
    if cfg.replay_fraction > 0.0 {
        replay_mix(&split.b, &split.a, cfg.replay_fraction, cfg.seed)
    } else {
        Ok(shift_labels(&split.b, split.a.num_categories()))
    }
}

fn check_task_a(net_a: &Network, split: &TaskSplit) -> Result<()> {
    if net_a.num_categories() != split.a.num_categories() {
        return Err(Error::arg(format!(
            "task-A network has {} outputs, task A has {} categories",
            net_a.num_categories(),
            split.a.num_categories()
        )));
    }
    if split.a_ids.iter().any(|c| split.b_ids.contains(c)) {
        return Err(Error::arg("task-A and task-B categories overlap"));
    }
    Ok(())
}

/// Learns task B while every retained neuron of `mask_a` and every task-A
/// output unit stays frozen.
///
/// The output layer is extended with fresh task-B units. Training updates only
/// non-retained hidden neurons and the new units, on task-B data (plus replayed
/// task-A rows when configured). `split_train` provides training data and
/// `split_test` the evaluation data for both tasks.
pub fn incremental_develop(
    net_a: &Network,
    mask_a: &impl KeepMask,
    split_train: &TaskSplit,
    split_test: &TaskSplit,
    cfg: &IncrementalConfig,
) -> Result<(Network, MaintenanceReport)> {
    check_task_a(net_a, split_train)?;
    let keep = mask_a.neuron_mask(net_a)?;
    let a_units = split_train.a.num_categories();
    let extended = net_a.extend_outputs(split_train.b.num_categories(), cfg.seed);

    let mut params = ParamMask::from_neurons(
        &extended,
        &NeuronMask {
            keep: keep.keep.iter().map(|l| l.iter().map(|&k| !k).collect()).collect(),
        },
        true,
    )?;
    let head = params.layers.last_mut().expect("output layer");
    head[..a_units].fill(false);

    let data = training_set(split_train, cfg)?;
    let trained = train(&extended, &data, &cfg.train, Some(&params))?;

    let acc_a = evaluate_by(&trained, &split_test.a, |x| {
        dual_inference(&trained, &keep, a_units, x, Task::A)
    })?;
    let acc_b = evaluate_by(&trained, &split_test.b, |x| {
        dual_inference(&trained, &keep, a_units, x, Task::B)
    })?;

    let mut report = MaintenanceReport::new("incdev", cfg.seed);
    report.strategy = Some("slice".into());
    report.trained_param_ratio =
        Some(params.trainable_params(&extended) as f64 / extended.param_count() as f64);
    fill_tasks(&mut report, acc_a.accuracy, acc_b.accuracy);
    report.extra.insert("replay_fraction".into(), cfg.replay_fraction);
    Ok((trained, report))
}

/// Baseline: fine-tunes the whole extended network on task B (optionally with
/// replay) and predicts with a joint argmax over all output units.
pub fn retrain_baseline(
    net_a: &Network,
    split_train: &TaskSplit,
    split_test: &TaskSplit,
    cfg: &IncrementalConfig,
) -> Result<(Network, MaintenanceReport)> {
    check_task_a(net_a, split_train)?;
    let a_units = split_train.a.num_categories();
    let extended = net_a.extend_outputs(split_train.b.num_categories(), cfg.seed);
    let data = training_set(split_train, cfg)?;
    let trained = train(&extended, &data, &cfg.train, None)?;

    let joint = |x: ArrayView2<'_, f32>| -> Result<Vec<usize>> {
        let out = propagate(&trained, x, None).pop().expect("layers");
        Ok(argmax_rows(out.view(), 0..out.ncols()))
    };
    let acc_a = evaluate_by(&trained, &split_test.a, joint)?;
    let test_b = shift_labels(&split_test.b, a_units);
    let acc_b = evaluate(&trained, &test_b)?;

    let mut report = MaintenanceReport::new("incdev", cfg.seed);
    report.strategy = Some(if cfg.replay_fraction > 0.0 {
        format!("replay-{}", cfg.replay_fraction)
    } else {
        "naive".into()
    });
    report.trained_param_ratio = Some(1.0);
    fill_tasks(&mut report, acc_a.accuracy, acc_b.accuracy);
    report.extra.insert("replay_fraction".into(), cfg.replay_fraction);
    Ok((trained, report))
}

fn fill_tasks(report: &mut MaintenanceReport, a: f64, b: f64) {
    report.task_a = Some(a);
    report.task_b = Some(b);
    report.task_avg = Some(0.5 * (a + b));
}
