use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{Map, Value};

use nslice::experiment::{ExperimentConfig, TOOL_VERSION};
use nslice::maintenance::MaintenanceReport;

/// Output directory of one run plus the provenance stamped on every file.
pub struct Run {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub hash: String,
}

impl Run {
    pub fn new(dir: PathBuf, config: ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let hash = config.hash();
        let run = Run { dir, config, hash };
        run.write_json("config.json", &run.config)?;
        Ok(run)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn meta(&self) -> [(&'static str, String); 2] {
        [("config_hash", self.hash.clone()), ("tool_version", TOOL_VERSION.to_string())]
    }

    /// Writes `value` as pretty JSON with `config_hash` and `tool_version`
    /// added to the top-level object.
    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        // Through text so f32 fields keep their short form.
        let mut v: Value = serde_json::from_str(&serde_json::to_string(value)?)?;
        if let Value::Object(obj) = &mut v {
            for (k, val) in self.meta() {
                obj.insert(k.to_string(), Value::String(val));
            }
        } else {
            let mut obj = Map::new();
            obj.insert("value".into(), v);
            for (k, val) in self.meta() {
                obj.insert(k.to_string(), Value::String(val));
            }
            v = Value::Object(obj);
        }
        let path = self.path(name);
        fs::write(&path, serde_json::to_string_pretty(&v)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    /// Stamps a report with the run's provenance and resolved config.
    pub fn stamp(&self, mut report: MaintenanceReport) -> Result<MaintenanceReport> {
        report.config_hash = Some(self.hash.clone());
        report.tool_version = Some(TOOL_VERSION.to_string());
        report.config = Some(serde_json::from_str(&serde_json::to_string(&self.config)?)?);
        Ok(report)
    }
}

pub fn read_json(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// `println!` that ignores a closed stdout.
#[macro_export]
macro_rules! say {
    ($($arg:tt)*) => {{
        let line = format!($($arg)*);
        let _ = ::std::io::Write::write_all(&mut ::std::io::stdout().lock(), (line + "\n").as_bytes());
    }};
}
