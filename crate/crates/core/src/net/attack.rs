//! Gradient-sign adversarial example generators.

use ndarray::{s, Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use super::backward::backward_raw;
use super::forward::propagate;
use super::Network;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Attack {
    Fgsm {
        epsilon: f32,
    },
    Pgd {
        epsilon: f32,
        step: f32,
        steps: usize,
    },
}

impl Attack {
    pub fn epsilon(&self) -> f32 {
        match *self {
            Attack::Fgsm { epsilon } | Attack::Pgd { epsilon, .. } => epsilon,
        }
    }

    pub fn generate(
        &self,
        net: &Network,
        x: ArrayView2<'_, f32>,
        labels: &[usize],
    ) -> Result<Array2<f32>> {
        match *self {
            Attack::Fgsm { epsilon } => fgsm(net, x, labels, epsilon),
            Attack::Pgd {
                epsilon,
                step,
                steps,
            } => pgd(net, x, labels, epsilon, step, steps),
        }
    }

    /// Same as [`Attack::generate`], in chunks to bound memory.
    pub fn generate_batched(
        &self,
        net: &Network,
        x: ArrayView2<'_, f32>,
        labels: &[usize],
    ) -> Result<Array2<f32>> {
        const CHUNK: usize = 1024;
        let mut out = Array2::zeros(x.raw_dim());
        for start in (0..x.nrows()).step_by(CHUNK) {
            let end = (start + CHUNK).min(x.nrows());
            let adv = self.generate(net, x.slice(s![start..end, ..]), &labels[start..end])?;
            out.slice_mut(s![start..end, ..]).assign(&adv);
        }
        Ok(out)
    }
}

/// Per-sample loss gradient with respect to the input.
fn input_gradient(net: &Network, x: ArrayView2<'_, f32>, labels: &[usize]) -> Result<Array2<f32>> {
    if x.ncols() != net.input_dim() {
        return Err(Error::InputShape {
            expected: net.input_dim(),
            actual: x.ncols(),
        });
    }
    let outputs = propagate(net, x, None);
    let grads = backward_raw(net, x, &outputs, labels, x.nrows() as f32, true)?;
    Ok(grads.input.expect("input gradient requested"))
}

fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Fast gradient sign method: `clip(x + ε·sign(∇ₓL), 0, 1)`.
pub fn fgsm(
    net: &Network,
    x: ArrayView2<'_, f32>,
    labels: &[usize],
    epsilon: f32,
) -> Result<Array2<f32>> {
    if !(epsilon >= 0.0) {
        return Err(Error::arg("epsilon must be non-negative"));
    }
    if epsilon == 0.0 {
        return Ok(x.to_owned());
    }
    let g = input_gradient(net, x, labels)?;
    let mut adv = x.to_owned();
    Zip::from(&mut adv)
        .and(&g)
        .for_each(|a, &gv| *a = (*a + epsilon * sign(gv)).clamp(0.0, 1.0));
    Ok(adv)
}

/// Projected gradient descent in the L∞ ball of radius `epsilon` around `x`.
pub fn pgd(
    net: &Network,
    x: ArrayView2<'_, f32>,
    labels: &[usize],
    epsilon: f32,
    step: f32,
    steps: usize,
) -> Result<Array2<f32>> {
    if !(epsilon >= 0.0 && step >= 0.0) {
        return Err(Error::arg("epsilon and step must be non-negative"));
    }
    if steps == 0 {
        return Err(Error::arg("pgd needs at least one step"));
    }
    let mut adv = x.to_owned();
    if epsilon == 0.0 {
        return Ok(adv);
    }
    for _ in 0..steps {
        let g = input_gradient(net, adv.view(), labels)?;
        Zip::from(&mut adv)
            .and(&g)
            .and(&x)
            .for_each(|a, &gv, &orig| {
                let moved = (*a + step * sign(gv)).clamp(0.0, 1.0);
                *a = moved.clamp(orig - epsilon, orig + epsilon);
            });
    }
    Ok(adv)
}
