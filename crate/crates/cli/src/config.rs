use std::path::{Path, PathBuf};

use fusim_core::fed::StorageMode;
use fusim_core::model::{FixedPointCodec, MlpConfig, PartitionMode, SgdConfig};
use fusim_core::sim::{Arrival, Distribution, NetworkModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub feature_dim: usize,
    pub cluster_spread: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { num_classes: 10, samples_per_class: 500, feature_dim: 16, cluster_spread: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub mode: PartitionMode,
    pub primary_fraction: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self { mode: PartitionMode::Iid, primary_fraction: 0.8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f32,
    pub batch_size: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { hidden: vec![32], learning_rate: 0.05, batch_size: 32 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub arrival: Arrival,
    pub distribution: Distribution,
    pub k: usize,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self { arrival: Arrival::Concurrent, distribution: Distribution::Adaptive, k: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    pub prime: u64,
    pub scale: u64,
    pub clamp_range: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        let c = FixedPointCodec::default();
        Self { prime: c.prime(), scale: c.scale(), clamp_range: c.clamp_range() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub shards: Vec<usize>,
    pub requests: Vec<usize>,
    pub trials: usize,
    pub pass_cost: f64,
    pub jitter: f64,
    /// Tolerated fraction of erroneous slices for the storage bounds.
    pub mu: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            shards: vec![1, 2, 4, 8],
            requests: vec![1, 2, 4, 8, 16],
            trials: 100_000,
            pass_cost: 1.0,
            jitter: 0.0,
            mu: 0.1,
        }
    }
}

/// One experiment. Every field has a default, so `{}` is a valid config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Size of the client population the cohort is drawn from.
    pub total_clients: usize,
    /// Clients selected into the stage.
    pub clients: usize,
    pub shards: usize,
    pub rounds: u32,
    pub local_epochs: usize,
    /// Local epoch reduction during calibrated retraining.
    pub ratio: f64,
    pub dataset: DatasetConfig,
    pub partition: PartitionConfig,
    pub training: TrainingConfig,
    pub workload: WorkloadConfig,
    pub storage: StorageMode,
    pub codec: CodecConfig,
    pub network: NetworkModel,
    pub simulate: SimulateConfig,
    pub seed: u64,
    pub record_wall_clock: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            total_clients: 100,
            clients: 20,
            shards: 4,
            rounds: 30,
            local_epochs: 10,
            ratio: 2.0,
            dataset: DatasetConfig::default(),
            partition: PartitionConfig::default(),
            training: TrainingConfig::default(),
            workload: WorkloadConfig::default(),
            storage: StorageMode::Coded,
            codec: CodecConfig::default(),
            network: NetworkModel::default(),
            simulate: SimulateConfig::default(),
            seed: 0,
            record_wall_clock: false,
            out_dir: PathBuf::from("runs"),
        }
    }
}

fn field(name: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{name}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.clients == 0 {
            return Err(field("clients", "must be positive"));
        }
        if self.total_clients < self.clients {
            return Err(field(
                "total_clients",
                format!("{} is smaller than the cohort of {}", self.total_clients, self.clients),
            ));
        }
        if self.shards == 0 || self.shards > self.clients {
            return Err(field("shards", format!("must lie in 1..={}, got {}", self.clients, self.shards)));
        }
        if self.local_epochs == 0 {
            return Err(field("local_epochs", "must be positive"));
        }
        if !(self.ratio.is_finite() && self.ratio >= 1.0) {
            return Err(field("ratio", format!("must be >= 1, got {}", self.ratio)));
        }
        let d = &self.dataset;
        if d.num_classes < 2 || d.samples_per_class == 0 || d.feature_dim == 0 {
            return Err(field("dataset", "needs at least two classes, one sample per class and one feature"));
        }
        if !(d.cluster_spread.is_finite() && d.cluster_spread >= 0.0) {
            return Err(field("dataset.cluster_spread", "must be finite and non-negative"));
        }
        if d.num_classes * d.samples_per_class < self.total_clients {
            return Err(field(
                "dataset",
                format!("{} samples cannot cover {} clients", d.num_classes * d.samples_per_class, self.total_clients),
            ));
        }
        if !(self.partition.primary_fraction > 0.0 && self.partition.primary_fraction <= 1.0) {
            return Err(field("partition.primary_fraction", "must lie in (0, 1]"));
        }
        let t = &self.training;
        if t.hidden.contains(&0) {
            return Err(field("training.hidden", "layer widths must be positive"));
        }
        if !(t.learning_rate.is_finite() && t.learning_rate > 0.0) {
            return Err(field("training.learning_rate", "must be positive"));
        }
        if t.batch_size == 0 {
            return Err(field("training.batch_size", "must be positive"));
        }
        if self.workload.k == 0 || self.workload.k > self.clients {
            return Err(field("workload.k", format!("must lie in 1..={}, got {}", self.clients, self.workload.k)));
        }
        let codec = self.codec()?;
        codec.check_points(self.shards + self.clients).map_err(|e| field("codec", e))?;
        self.network.validate().map_err(|e| field("network", e))?;
        let s = &self.simulate;
        if s.shards.is_empty() || s.requests.is_empty() || s.shards.contains(&0) || s.requests.contains(&0) {
            return Err(field("simulate", "shard and request grids must be non-empty and positive"));
        }
        if s.trials == 0 {
            return Err(field("simulate.trials", "must be positive"));
        }
        if !(s.pass_cost.is_finite() && s.pass_cost > 0.0) {
            return Err(field("simulate.pass_cost", "must be positive"));
        }
        if !(0.0..=1.0).contains(&s.jitter) {
            return Err(field("simulate.jitter", "must lie in [0, 1]"));
        }
        if !(0.0..0.5).contains(&s.mu) {
            return Err(field("simulate.mu", "must lie in [0, 0.5)"));
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus the constraints of an actual
    /// sharded deployment.
    pub fn validate_training(&self) -> CliResult<()> {
        self.validate()?;
        if !self.clients.is_multiple_of(self.shards) {
            return Err(field(
                "shards",
                format!("{} does not divide the {} selected clients evenly", self.shards, self.clients),
            ));
        }
        Ok(())
    }

    pub fn codec(&self) -> CliResult<FixedPointCodec> {
        FixedPointCodec::new(self.codec.prime, self.codec.scale, self.codec.clamp_range).map_err(|e| field("codec", e))
    }

    pub fn mlp(&self) -> MlpConfig {
        MlpConfig {
            input_dim: self.dataset.feature_dim,
            hidden: self.training.hidden.clone(),
            num_classes: self.dataset.num_classes,
        }
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            epochs: self.local_epochs,
            learning_rate: self.training.learning_rate,
            batch_size: self.training.batch_size,
        }
    }

    /// Hash of everything that influences outputs. The output directory is
    /// excluded so relocated runs compare equal.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        digest(&c)
    }

    /// Hash of the settings that shape training artifacts.
    pub fn training_hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.workload = WorkloadConfig::default();
        c.simulate = SimulateConfig::default();
        c.ratio = 1.0;
        c.network = NetworkModel::default();
        c.record_wall_clock = false;
        digest(&c)
    }

    /// Hash of the settings shared by runs that may appear in one report:
    /// seed, sharding, storage mode and workload are allowed to vary.
    pub fn comparable_hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.seed = 0;
        c.shards = 1;
        c.storage = StorageMode::Uncoded;
        c.workload = WorkloadConfig::default();
        c.record_wall_clock = false;
        digest(&c)
    }

    /// Directory for one seed and sharding layout.
    pub fn layout_dir(&self) -> PathBuf {
        self.out_dir.join(format!("seed-{}", self.seed)).join(format!("s{}-{}", self.shards, self.storage.as_str()))
    }

    pub fn train_dir(&self) -> PathBuf {
        self.layout_dir().join("train")
    }

    pub fn unlearn_dir(&self, method: fusim_core::unlearn::Method) -> PathBuf {
        let w = &self.workload;
        self.layout_dir().join(format!(
            "unlearn-{}-{}-{}-k{}",
            method.as_str().to_lowercase(),
            w.arrival.as_str(),
            w.distribution.as_str(),
            w.k
        ))
    }
}

pub(crate) fn digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex(&Sha256::digest(bytes))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
