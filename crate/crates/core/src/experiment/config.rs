use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contribution::{Metric, Scope};
use crate::data::{load_idx, synth_blobs, Dataset};
use crate::error::{Error, Result};
use crate::maintenance::{default_bands, PruneConfig, ReadaptConfig};
use crate::net::{Network, TrainConfig};
use crate::slicing::{SliceConfig, Strategy};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where the training and test sets come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Four IDX files. Relative paths resolve against the config file.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Seeded subsample of the training set.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_limit: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_limit: Option<usize>,
    },
    /// Gaussian blobs; the test rows share the training centers.
    Synthetic {
        categories: usize,
        train_per_category: usize,
        test_per_category: usize,
        dim: usize,
        spread: f32,
    },
}

impl DatasetSpec {
    /// The standard MNIST file names inside `dir`.
    pub fn mnist(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        DatasetSpec::Idx {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
            train_limit: None,
            test_limit: None,
        }
    }

    fn rebase(&mut self, base: &Path) {
        if let DatasetSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            ..
        } = self
        {
            for p in [train_images, train_labels, test_images, test_labels] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }
}

/// Training and test sets of one experiment.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
}

impl Splits {
    pub fn load(spec: &DatasetSpec, seed: u64) -> Result<Splits> {
        match spec {
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                train_limit,
                test_limit,
            } => {
                let mut train = load_idx(train_images, train_labels)?;
                let mut test = load_idx(test_images, test_labels)?;
                let k = train.num_categories().max(test.num_categories());
                train = train.with_num_categories(k)?;
                test = test.with_num_categories(k)?;
                if let Some(n) = train_limit {
                    train = train.sample(*n, seed);
                }
                if let Some(n) = test_limit {
                    test = test.sample(*n, seed);
                }
                Ok(Splits { train, test })
            }
            DatasetSpec::Synthetic {
                categories,
                train_per_category,
                test_per_category,
                dim,
                spread,
            } => {
                let per = train_per_category + test_per_category;
                let all = synth_blobs(*categories, per, *dim, *spread, seed)?;
                let (mut tr, mut te) = (Vec::new(), Vec::new());
                for i in 0..all.len() {
                    if i % per < *train_per_category {
                        tr.push(i);
                    } else {
                        te.push(i);
                    }
                }
                Ok(Splits {
                    train: all.subset(&tr)?,
                    test: all.subset(&te)?,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSpec {
    pub layers: Vec<usize>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            layers: vec![784, 512, 256, 10],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PilotSpec {
    pub metrics: Vec<Metric>,
    pub scopes: Vec<Scope>,
    pub bands: Vec<(f64, f64)>,
}

impl Default for PilotSpec {
    fn default() -> Self {
        PilotSpec {
            metrics: Metric::ALL.to_vec(),
            scopes: vec![Scope::Global, Scope::Category],
            bands: default_bands(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IncdevSpec {
    /// Original category ids forming task A; the rest form task B.
    pub task_a: Vec<usize>,
    pub replay_fraction: f64,
    pub train: TrainConfig,
    /// Also run the full-retraining baseline with the same replay fraction.
    pub baseline: bool,
}

impl Default for IncdevSpec {
    fn default() -> Self {
        IncdevSpec {
            task_a: (0..5).collect(),
            replay_fraction: 0.0,
            train: TrainConfig::default(),
            baseline: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruneSpec {
    /// Sparsity relative to the unrestructured parameter count.
    pub target_sparsity: f64,
    /// Allowed accuracy drop below the original model.
    pub accuracy_drop: f64,
    pub config: PruneConfig,
}

impl Default for PruneSpec {
    fn default() -> Self {
        PruneSpec {
            target_sparsity: 0.9,
            accuracy_drop: 0.01,
            config: PruneConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub strategies: Vec<Strategy>,
    pub metrics: Vec<Metric>,
    pub thetas: Vec<f64>,
    /// Kept fractions for the top-k strategies.
    pub fractions: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            strategies: vec![Strategy::Semantic, Strategy::GlobalTopk, Strategy::CategoryTopk],
            metrics: Metric::ALL.to_vec(),
            thetas: (90..100).map(|t| t as f64 / 100.0).collect(),
            fractions: (1..=10).map(|k| k as f64 / 10.0).collect(),
        }
    }
}

/// Everything one run needs. The top-level `seed` replaces every section seed
/// on [`resolve`](Self::resolve).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub slice: SliceConfig,
    /// Data the contribution scores are computed on.
    #[serde(default = "default_score_split")]
    pub score_split: Split,
    #[serde(default)]
    pub pilot: PilotSpec,
    #[serde(default)]
    pub readapt: ReadaptConfig,
    #[serde(default)]
    pub incdev: IncdevSpec,
    #[serde(default)]
    pub prune: PruneSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_score_split() -> Split {
    Split::Train
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSpec) -> Self {
        ExperimentConfig {
            seed: 0,
            dataset,
            network: NetworkSpec::default(),
            train: TrainConfig::default(),
            slice: SliceConfig::default(),
            score_split: Split::Train,
            pilot: PilotSpec::default(),
            readapt: ReadaptConfig::default(),
            incdev: IncdevSpec::default(),
            prune: PruneSpec::default(),
            sweep: SweepSpec::default(),
            out: None,
        }
    }

    /// Parses a config file; relative IDX paths resolve against its directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            cfg.dataset.rebase(dir);
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Copies the top-level seed into every section and validates.
    pub fn resolve(mut self) -> Result<Self> {
        let s = self.seed;
        self.train.seed = s;
        self.slice.seed = s;
        self.readapt.seed = s;
        self.readapt.train.seed = s;
        self.incdev.train.seed = s;
        self.prune.config.retrain.seed = s;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        if self.network.layers.len() < 3 || self.network.layers.contains(&0) {
            return Err(Error::Config(
                "network needs an input size, at least one hidden layer and an output size".into(),
            ));
        }
        self.train.validate().map_err(cfg)?;
        self.slice.validate()?;
        self.readapt.train.validate().map_err(cfg)?;
        self.incdev.train.validate().map_err(cfg)?;
        if !(0.0..=1.0).contains(&self.incdev.replay_fraction) {
            return Err(Error::Config("replay_fraction must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.prune.target_sparsity) {
            return Err(Error::Config("target_sparsity must lie in [0, 1)".into()));
        }
        for &(lo, hi) in &self.pilot.bands {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(Error::Config(format!("invalid band ({lo}, {hi}]")));
            }
        }
        if self.sweep.thetas.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(Error::Config("sweep thetas must lie in (0, 1)".into()));
        }
        if self.sweep.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(Error::Config("sweep fractions must lie in (0, 1]".into()));
        }
        if let DatasetSpec::Synthetic { dim, .. } = self.dataset {
            if dim != self.network.layers[0] {
                return Err(Error::Config(format!(
                    "synthetic dim {dim} differs from network input {}",
                    self.network.layers[0]
                )));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON of the config without `out`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load_data(&self) -> Result<Splits> {
        let splits = Splits::load(&self.dataset, self.seed)?;
        let k = *self.network.layers.last().expect("validated");
        if splits.train.dim() != self.network.layers[0] {
            return Err(Error::Config(format!(
                "data has {} features, network expects {}",
                splits.train.dim(),
                self.network.layers[0]
            )));
        }
        if splits.train.num_categories() > k {
            return Err(Error::Config(format!(
                "data has {} categories, network has {k} outputs",
                splits.train.num_categories()
            )));
        }
        Ok(Splits {
            train: splits.train.with_num_categories(k)?,
            test: splits.test.with_num_categories(k)?,
        })
    }

    pub fn init_network(&self) -> Result<Network> {
        Network::new(&self.network.layers, self.seed)
    }

    /// The split contribution scores are computed on.
    pub fn score_data<'a>(&self, splits: &'a Splits) -> &'a Dataset {
        match self.score_split {
            Split::Train => &splits.train,
            Split::Test => &splits.test,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic() -> DatasetSpec {
        DatasetSpec::Synthetic {
            categories: 2,
            train_per_category: 20,
            test_per_category: 5,
            dim: 4,
            spread: 0.1,
        }
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let text = r#"{"dataset": {"kind": "synthetic", "categories": 2, "train_per_category": 20,
            "test_per_category": 5, "dim": 4, "spread": 0.1}, "network": {"layers": [4, 6, 2]}}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap().resolve().unwrap();
        assert_eq!(cfg.slice.theta, 0.95);
        assert_eq!(cfg.score_split, Split::Train);
        let s = cfg.load_data().unwrap();
        assert_eq!((s.train.len(), s.test.len()), (40, 10));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"dataset": {"kind": "synthetic", "categories": 2, "train_per_category": 2, "test_per_category": 2, "dim": 4, "spread": 0.1}, "bogus": 1}"#,
            r#"{"dataset": {"kind": "synthetic", "categories": 2, "train_per_category": 2, "test_per_category": 2, "dim": 4, "spread": 0.1, "bogus": 1}}"#,
            r#"{"dataset": {"kind": "synthetic", "categories": 2, "train_per_category": 2, "test_per_category": 2, "dim": 4, "spread": 0.1}, "slice": {"thetta": 0.9}}"#,
        ] {
            assert!(matches!(ExperimentConfig::from_json(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn seed_reaches_every_section_and_the_hash() {
        let mut cfg = ExperimentConfig::new(synthetic());
        cfg.network.layers = vec![4, 6, 2];
        cfg.seed = 7;
        let a = cfg.clone().resolve().unwrap();
        assert_eq!((a.train.seed, a.slice.seed, a.readapt.train.seed), (7, 7, 7));
        cfg.seed = 8;
        let b = cfg.resolve().unwrap();
        assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.out = Some("elsewhere".into());
        assert_eq!(a.hash(), c.hash());
    }

    #[test]
    fn synthetic_test_rows_are_fresh_draws() {
        let s = Splits::load(&synthetic(), 3).unwrap();
        for row in s.test.inputs().rows() {
            assert!(s.train.inputs().rows().into_iter().all(|r| r != row));
        }
    }

    #[test]
    fn relative_idx_paths_follow_the_config_file() {
        let mut spec = DatasetSpec::mnist("data");
        spec.rebase(Path::new("/cfg"));
        let DatasetSpec::Idx { train_images, .. } = spec else { unreachable!() };
        assert_eq!(train_images, Path::new("/cfg/data/train-images-idx3-ubyte"));
    }
}
