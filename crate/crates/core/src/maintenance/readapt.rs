use serde::{Deserialize, Serialize};

use super::MaintenanceReport;
use crate::data::Dataset;
use crate::error::Result;
use crate::net::{
    evaluate, train_with, AdversarialTraining, Attack, KeepMask, Network, ParamMask, TrainConfig,
    TrainHooks,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadaptConfig {
    pub attack: Attack,
    pub train: TrainConfig,
    /// Regenerate the adversarial training set from the current model at the
    /// start of every epoch (otherwise once, from the initial model).
    pub regenerate_each_epoch: bool,
    /// Also train the output layer alongside the retained hidden neurons.
    pub train_head: bool,
    /// Size of the held-out adversarial evaluation sets.
    pub eval_samples: usize,
    pub seed: u64,
}

impl Default for ReadaptConfig {
    fn default() -> Self {
        ReadaptConfig {
            attack: Attack::Fgsm { epsilon: 0.1 },
            train: TrainConfig::default(),
            regenerate_each_epoch: true,
            train_head: true,
            eval_samples: 1000,
            seed: 0,
        }
    }
}

/// Adversarial re-adaptation that updates only parameters owned by the
/// retained neurons (and the output layer when `train_head` is set).
///
/// The loss is `L(x) + L(adv_x)`. Reported measures:
/// * trained-parameter ratio: trainable parameters over all parameters;
/// * retrained accuracy: accuracy on a held-out adversarial set crafted
///   against the model *before* repair;
/// * re-attack accuracy: accuracy on fresh attacks against the repaired model;
/// * clean accuracy on the whole held-out set.
pub fn readapt(
    net: &Network,
    mask: &impl KeepMask,
    train_data: &Dataset,
    heldout: &Dataset,
    cfg: &ReadaptConfig,
) -> Result<(Network, MaintenanceReport)> {
    let keep = mask.neuron_mask(net)?;
    let params = ParamMask::from_neurons(net, &keep, cfg.train_head)?;
    let eval = heldout.sample(cfg.eval_samples, cfg.seed);

    let adv_before = cfg
        .attack
        .generate_batched(net, eval.inputs().view(), eval.labels())?;
    let adv_before = Dataset::new(adv_before, eval.labels().to_vec(), eval.num_categories(), "adv-pre")?;
    let clean_before = evaluate(net, heldout)?.accuracy;
    let adv_acc_before = evaluate(net, &adv_before)?.accuracy;

    let hooks = TrainHooks {
        weight_mask: None,
        adversarial: Some(AdversarialTraining {
            attack: cfg.attack,
            regenerate_each_epoch: cfg.regenerate_each_epoch,
        }),
    };
    let repaired = train_with(net, train_data, &cfg.train, Some(&params), &hooks)?;

    let adv_after = cfg
        .attack
        .generate_batched(&repaired, eval.inputs().view(), eval.labels())?;
    let adv_after = Dataset::new(adv_after, eval.labels().to_vec(), eval.num_categories(), "adv-post")?;

    let mut report = MaintenanceReport::new("readapt", cfg.seed);
    report.trained_param_ratio = Some(params.trainable_params(net) as f64 / net.param_count() as f64);
    report.retrained_accuracy = Some(evaluate(&repaired, &adv_before)?.accuracy);
    report.reattack_accuracy = Some(evaluate(&repaired, &adv_after)?.accuracy);
    let clean = evaluate(&repaired, heldout)?;
    report.clean_accuracy = Some(clean.accuracy);
    report.per_category = Some(clean.per_category);
    report.extra.insert("clean_accuracy_before".into(), clean_before);
    report.extra.insert("adversarial_accuracy_before".into(), adv_acc_before);
    report.extra.insert("epsilon".into(), f64::from(cfg.attack.epsilon()));
    Ok((repaired, report))
}
