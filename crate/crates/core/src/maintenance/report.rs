use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::contribution::Metric;
use crate::error::{Error, Result};

/// Outcome of one maintenance run. Task-specific fields are `None` when they
/// do not apply.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MaintenanceReport {
    pub experiment: String,
    /// Slicing strategy or baseline name.
    pub strategy: Option<String>,
    pub metric: Option<Metric>,
    pub theta: Option<f64>,
    pub seed: u64,
    pub params_before: Option<usize>,
    pub params_after: Option<usize>,
    pub compression_rate: Option<f64>,
    pub accuracy: Option<f64>,
    pub per_category: Option<Vec<Option<f64>>>,
    pub trained_param_ratio: Option<f64>,
    pub retrained_accuracy: Option<f64>,
    pub reattack_accuracy: Option<f64>,
    pub clean_accuracy: Option<f64>,
    pub task_a: Option<f64>,
    pub task_b: Option<f64>,
    pub task_avg: Option<f64>,
    pub iterations: Option<usize>,
    /// Further named measurements.
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

const CSV_HEADER: [&str; 19] = [
    "experiment",
    "strategy",
    "metric",
    "theta",
    "seed",
    "compression_rate",
    "accuracy",
    "trained_param_ratio",
    "retrained_accuracy",
    "reattack_accuracy",
    "clean_accuracy",
    "task_a",
    "task_b",
    "task_avg",
    "iterations",
    "params_before",
    "params_after",
    "config_hash",
    "tool_version",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MaintenanceReport {
    pub fn new(experiment: impl Into<String>, seed: u64) -> Self {
        MaintenanceReport {
            experiment: experiment.into(),
            seed,
            ..Default::default()
        }
    }

    /// Checks that every ratio lies in `[0, 1]` and that the compression rate
    /// agrees with the parameter counts.
    pub fn validate(&self) -> Result<()> {
        let ratios = [
            ("compression_rate", self.compression_rate),
            ("accuracy", self.accuracy),
            ("trained_param_ratio", self.trained_param_ratio),
            ("retrained_accuracy", self.retrained_accuracy),
            ("reattack_accuracy", self.reattack_accuracy),
            ("clean_accuracy", self.clean_accuracy),
            ("task_a", self.task_a),
            ("task_b", self.task_b),
            ("task_avg", self.task_avg),
        ];
        for (name, v) in ratios {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::arg(format!("{name} = {v} is outside [0, 1]")));
                }
            }
        }
        if let (Some(cr), Some(b), Some(a)) = (self.compression_rate, self.params_before, self.params_after) {
            let want = 1.0 - a as f64 / b as f64;
            if (cr - want).abs() > 1e-12 {
                return Err(Error::arg(format!("compression rate {cr} disagrees with {a}/{b}")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn csv_row(&self) -> Vec<String> {
        vec![
            self.experiment.clone(),
            self.strategy.clone().unwrap_or_default(),
            opt(self.metric),
            opt(self.theta),
            self.seed.to_string(),
            opt(self.compression_rate),
            opt(self.accuracy),
            opt(self.trained_param_ratio),
            opt(self.retrained_accuracy),
            opt(self.reattack_accuracy),
            opt(self.clean_accuracy),
            opt(self.task_a),
            opt(self.task_b),
            opt(self.task_avg),
            opt(self.iterations),
            opt(self.params_before),
            opt(self.params_after),
            self.config_hash.clone().unwrap_or_default(),
            self.tool_version.clone().unwrap_or_default(),
        ]
    }
}

/// Writes reports as CSV rows sorted by (experiment, strategy, metric, theta, seed).
pub fn write_reports_csv<W: Write>(reports: &[MaintenanceReport], out: W) -> Result<()> {
    let mut rows: Vec<&MaintenanceReport> = reports.iter().collect();
    rows.sort_by(|a, b| {
        (&a.experiment, &a.strategy, a.metric, a.seed)
            .cmp(&(&b.experiment, &b.strategy, b.metric, b.seed))
            .then(a.theta.unwrap_or(-1.0).total_cmp(&b.theta.unwrap_or(-1.0)))
    });
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}
