use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::SweepSpec;
use crate::contribution::{contribution, Metric, Scope};
use crate::data::Dataset;
use crate::error::Result;
use crate::net::{evaluate, evaluate_by, mask_forward, Network};
use crate::slicing::{baseline_slice, semantic_slice_with, SliceConfig, SliceMask, Strategy};

/// One (compression rate, masked accuracy) point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub strategy: Strategy,
    pub metric: Metric,
    /// Θ for the semantic strategy, the kept fraction otherwise.
    pub param: f64,
    pub compression_rate: f64,
    pub accuracy: f64,
    pub retained: usize,
}

/// Masked accuracy of `mask` on `data`.
pub fn masked_accuracy(net: &Network, mask: &SliceMask, data: &Dataset) -> Result<f64> {
    let keep = mask.to_neuron_mask();
    Ok(evaluate_by(net, data, |x| mask_forward(net, x, &keep))?.accuracy)
}

/// Slices `net` for every configured (strategy, metric, parameter) and
/// measures compression rate and masked accuracy on `eval_data`.
///
/// Scores come from `score_data`; `base` supplies the scan settings.
pub fn sweep(
    net: &Network,
    score_data: &Dataset,
    eval_data: &Dataset,
    spec: &SweepSpec,
    base: &SliceConfig,
) -> Result<Vec<SweepPoint>> {
    let mut points = Vec::new();
    for &metric in &spec.metrics {
        let needs_category = spec
            .strategies
            .iter()
            .any(|s| matches!(s, Strategy::Semantic | Strategy::CategoryTopk));
        let category = if needs_category {
            Some(contribution(net, score_data, metric, Scope::Category)?)
        } else {
            None
        };
        let global = if spec.strategies.contains(&Strategy::GlobalTopk) {
            Some(contribution(net, score_data, metric, Scope::Global)?)
        } else {
            None
        };
        for &strategy in &spec.strategies {
            let runs: Vec<(f64, SliceMask)> = match strategy {
                Strategy::Semantic => spec
                    .thetas
                    .iter()
                    .map(|&theta| {
                        let cfg = SliceConfig { theta, ..base.clone() };
                        let map = category.as_ref().expect("category scores");
                        Ok((theta, semantic_slice_with(net, score_data, map, &cfg)?))
                    })
                    .collect::<Result<_>>()?,
                Strategy::GlobalTopk | Strategy::CategoryTopk => {
                    let map = if strategy == Strategy::GlobalTopk {
                        global.as_ref()
                    } else {
                        category.as_ref()
                    }
                    .expect("scores computed");
                    spec.fractions
                        .iter()
                        .map(|&f| Ok((f, baseline_slice(net, map, f)?)))
                        .collect::<Result<_>>()?
                }
            };
            for (param, mask) in runs {
                let point = SweepPoint {
                    strategy,
                    metric,
                    param,
                    compression_rate: mask.compression_rate(net),
                    accuracy: masked_accuracy(net, &mask, eval_data)?,
                    retained: mask.num_retained(),
                };
                log::info!(
                    "{} {} {:.2}: CR {:.4} acc {:.4}",
                    strategy.as_str(),
                    metric,
                    param,
                    point.compression_rate,
                    point.accuracy
                );
                points.push(point);
            }
        }
    }
    Ok(points)
}

/// Unmasked reference point, used when a sweep has nothing to remove.
pub fn original_point(net: &Network, data: &Dataset) -> Result<f64> {
    Ok(evaluate(net, data)?.accuracy)
}

/// Metric with the highest mean accuracy over a strategy's points
/// (ties to the earlier metric in [`Metric::ALL`]).
pub fn best_metric(points: &[SweepPoint], strategy: Strategy) -> Option<Metric> {
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for p in points.iter().filter(|p| p.strategy == strategy) {
        let k = Metric::ALL.iter().position(|m| *m == p.metric).expect("known metric");
        let e = sums.entry(k).or_insert((0.0, 0));
        e.0 += p.accuracy;
        e.1 += 1;
    }
    let mut best: Option<(usize, f64)> = None;
    for (k, (s, n)) in sums {
        let mean = s / n as f64;
        if best.is_none_or(|(_, b)| mean > b) {
            best = Some((k, mean));
        }
    }
    best.map(|(k, _)| Metric::ALL[k])
}

/// Comparison of the semantic curve with the top-k curves at matched
/// compression rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dominance {
    pub semantic_metric: Option<Metric>,
    pub global_metric: Option<Metric>,
    pub category_metric: Option<Metric>,
    /// Semantic points with at least one baseline point within tolerance.
    pub matched: usize,
    /// Matched points not beaten by any matched baseline point.
    pub wins: usize,
}

impl Dominance {
    pub fn ratio(&self) -> f64 {
        if self.matched == 0 {
            0.0
        } else {
            self.wins as f64 / self.matched as f64
        }
    }
}

/// For each semantic point (best metric), the nearest-CR point of each
/// baseline curve (its best metric) counts as matched when within `tolerance`.
pub fn dominance(points: &[SweepPoint], tolerance: f64) -> Dominance {
    let sm = best_metric(points, Strategy::Semantic);
    let gm = best_metric(points, Strategy::GlobalTopk);
    let cm = best_metric(points, Strategy::CategoryTopk);
    let curve = |s: Strategy, m: Option<Metric>| -> Vec<&SweepPoint> {
        points
            .iter()
            .filter(|p| p.strategy == s && Some(p.metric) == m)
            .collect()
    };
    let baselines = [curve(Strategy::GlobalTopk, gm), curve(Strategy::CategoryTopk, cm)];
    let (mut matched, mut wins) = (0, 0);
    for s in curve(Strategy::Semantic, sm) {
        let mut any = false;
        let mut beaten = false;
        for b in &baselines {
            let nearest = b.iter().min_by(|x, y| {
                let dx = (x.compression_rate - s.compression_rate).abs();
                let dy = (y.compression_rate - s.compression_rate).abs();
                dx.total_cmp(&dy)
            });
            if let Some(n) = nearest {
                if (n.compression_rate - s.compression_rate).abs() <= tolerance {
                    any = true;
                    beaten |= n.accuracy > s.accuracy;
                }
            }
        }
        if any {
            matched += 1;
            if !beaten {
                wins += 1;
            }
        }
    }
    Dominance {
        semantic_metric: sm,
        global_metric: gm,
        category_metric: cm,
        matched,
        wins,
    }
}

/// CSV with header `strategy,metric,param,compression_rate,accuracy,retained`
/// followed by one column per `meta` entry, repeated on every row.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], meta: &[(&str, &str)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["strategy", "metric", "param", "compression_rate", "accuracy", "retained"];
    header.extend(meta.iter().map(|(k, _)| *k));
    w.write_record(&header)?;
    for p in points {
        let mut row = vec![
            p.strategy.as_str().to_string(),
            p.metric.to_string(),
            p.param.to_string(),
            p.compression_rate.to_string(),
            p.accuracy.to_string(),
            p.retained.to_string(),
        ];
        row.extend(meta.iter().map(|(_, v)| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// [`sweep`] with the metrics spread over up to `threads` worker threads.
/// Points come back in the same order as the single-threaded run.
pub fn sweep_parallel(
    net: &Network,
    score_data: &Dataset,
    eval_data: &Dataset,
    spec: &SweepSpec,
    base: &SliceConfig,
    threads: usize,
) -> Result<Vec<SweepPoint>> {
    let threads = threads.clamp(1, spec.metrics.len().max(1));
    if threads == 1 {
        return sweep(net, score_data, eval_data, spec, base);
    }
    let groups: Vec<SweepSpec> = spec
        .metrics
        .chunks(spec.metrics.len().div_ceil(threads))
        .map(|m| SweepSpec { metrics: m.to_vec(), ..spec.clone() })
        .collect();
    let results: Vec<Result<Vec<SweepPoint>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = groups
            .iter()
            .map(|g| scope.spawn(move || sweep(net, score_data, eval_data, g, base)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut points = Vec::new();
    for r in results {
        points.extend(r?);
    }
    Ok(points)
}
