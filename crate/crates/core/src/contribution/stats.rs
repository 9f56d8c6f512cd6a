use ndarray::{s, ArrayView2};

use crate::error::{Error, Result};
use crate::net::Network;

pub(crate) const CHUNK: usize = 2048;

/// Running per-column mean and population variance (Welford).
#[derive(Debug, Clone)]
struct Moments {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(width: usize) -> Self {
        Moments {
            count: 0.0,
            mean: vec![0.0; width],
            m2: vec![0.0; width],
        }
    }

    fn push_rows(&mut self, acts: ArrayView2<'_, f32>) {
        for row in acts.rows() {
            self.count += 1.0;
            for ((m, q), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(row.iter()) {
                let x = f64::from(x);
                let delta = x - *m;
                *m += delta / self.count;
                *q += delta * (x - *m);
            }
        }
    }

    fn variance(&self) -> Vec<f64> {
        self.m2.iter().map(|q| (q / self.count).max(0.0)).collect()
    }
}

fn nonempty(acts: &ArrayView2<'_, f32>) -> Result<()> {
    if acts.nrows() == 0 {
        return Err(Error::arg("contribution scores need at least one sample"));
    }
    Ok(())
}

/// Mean post-activation of every neuron (column) of `acts`.
pub fn avg_score(acts: ArrayView2<'_, f32>) -> Result<Vec<f64>> {
    nonempty(&acts)?;
    let mut m = Moments::new(acts.ncols());
    m.push_rows(acts);
    Ok(m.mean)
}

/// Population variance (denominator `|D|`) of every column of `acts`.
pub fn var_score(acts: ArrayView2<'_, f32>) -> Result<Vec<f64>> {
    nonempty(&acts)?;
    let mut m = Moments::new(acts.ncols());
    m.push_rows(acts);
    Ok(m.variance())
}

fn min_max(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / span).collect()
}

/// Equal-weight blend of the min-max normalised mean and variance.
pub fn ens_score(avg: &[f64], var: &[f64]) -> Result<Vec<f64>> {
    if avg.len() != var.len() {
        return Err(Error::shape(format!(
            "avg has {} entries, var has {}",
            avg.len(),
            var.len()
        )));
    }
    Ok(min_max(avg)
        .into_iter()
        .zip(min_max(var))
        .map(|(a, v)| 0.5 * a + 0.5 * v)
        .collect())
}

/// Means and variances of every hidden layer, streamed in chunks.
pub(crate) fn moments_all(
    net: &Network,
    inputs: ArrayView2<'_, f32>,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    nonempty(&inputs)?;
    let hidden = net.num_hidden();
    let mut acc: Vec<Moments> = net.hidden_widths().into_iter().map(Moments::new).collect();
    for start in (0..inputs.nrows()).step_by(CHUNK) {
        let end = (start + CHUNK).min(inputs.nrows());
        let outs = crate::net::propagate(net, inputs.slice(s![start..end, ..]), None);
        for (m, a) in acc.iter_mut().zip(outs.iter().take(hidden)) {
            m.push_rows(a.view());
        }
    }
    let vars = acc.iter().map(Moments::variance).collect();
    Ok((acc.into_iter().map(|m| m.mean).collect(), vars))
}
