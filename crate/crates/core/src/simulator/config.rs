//! Run configuration and its resolution into a concrete simulation setup.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationConfig;
use crate::attacks::AttackSpec;
use crate::data::{
    holdout_split, load_csv, partition_by_subject, partition_iid, partition_label_shards, partition_nonuniform,
    split_train_test, synth_blobs, CsvOptions, Dataset, Partition, PartitionSummary, Standardizer,
    WorkerSummary,
};
use crate::error::{Error, Result};
use crate::graph::{Topology, TopologySpec};
use crate::model::{ModelSpec, OptimizerConfig, OptimizerKind};

/// A complete run description. Every field has a default, so a config file
/// only needs to state what differs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub epochs: usize,
    pub topology: TopologySpec,
    pub data: DataConfig,
    pub partition: PartitionConfig,
    pub model: ModelConfig,
    pub optimizer: TrainConfig,
    pub aggregation: AggregationConfig,
    pub attack: AttackSpec,
    pub output: OutputConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 100,
            topology: TopologySpec::Complete,
            data: DataConfig::default(),
            partition: PartitionConfig::default(),
            model: ModelConfig::default(),
            optimizer: TrainConfig::default(),
            aggregation: AggregationConfig::default(),
            attack: AttackSpec::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Gaussian clusters from [`synth_blobs`].
    Blobs {
        #[serde(default = "default_n_per_class")]
        n_per_class: usize,
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_d_x")]
        d_x: usize,
        #[serde(default = "default_spread")]
        spread: f64,
    },
    /// A numeric CSV table. Relative paths resolve against the config
    /// file's directory.
    Csv {
        path: PathBuf,
        #[serde(default)]
        label_column: usize,
        #[serde(default)]
        subject_column: Option<usize>,
        #[serde(default)]
        has_header: bool,
    },
}

fn default_n_per_class() -> usize {
    500
}

fn default_classes() -> usize {
    2
}

fn default_d_x() -> usize {
    2
}

fn default_spread() -> f64 {
    0.5
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Blobs {
            n_per_class: default_n_per_class(),
            classes: default_classes(),
            d_x: default_d_x(),
            spread: default_spread(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    #[default]
    Iid,
    LabelShards,
    Subject,
    Nonuniform,
}

/// Where test accuracy is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    /// Each worker's own held-out part of its shard.
    #[default]
    Local,
    /// One held-out set shared by every worker.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub kind: PartitionKind,
    /// Required except for subject partitions, where it is inferred.
    pub n_workers: Option<usize>,
    pub shards_per_worker: usize,
    pub train_fraction: f64,
    /// Defaults to true for CSV data and false for synthetic data.
    pub standardize: Option<bool>,
    pub test: TestKind,
    pub global_test_fraction: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            kind: PartitionKind::Iid,
            n_workers: Some(10),
            shards_per_worker: 2,
            train_fraction: 0.75,
            standardize: None,
            test: TestKind::Local,
            global_test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden widths; input and output widths come from the data.
    pub layers: Vec<usize>,
    pub init_scale: f64,
    /// Start every worker from the same draw instead of its own.
    pub shared_init: bool,
    pub l2: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: vec![16],
            init_scale: 1.0,
            shared_init: false,
            l2: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub batch_size: usize,
    /// Batch used to score received parameters; defaults to `batch_size`.
    pub risk_batch_size: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let o = OptimizerConfig::default();
        Self {
            kind: o.kind,
            lr: o.lr,
            batch_size: 32,
            risk_batch_size: None,
            beta1: o.beta1,
            beta2: o.beta2,
            eps: o.eps,
        }
    }
}

impl TrainConfig {
    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            kind: self.kind,
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// One worker's identity, role and data.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerSetup {
    /// Stable id; also addresses the worker's random streams.
    pub id: usize,
    pub adversarial: bool,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Everything a [`Simulation`](super::Simulation) needs, fully resolved.
#[derive(Debug, Clone)]
pub struct Setup {
    pub seed: u64,
    pub epochs: usize,
    pub dataset: Dataset,
    pub spec: ModelSpec,
    pub topology: Topology,
    pub workers: Vec<WorkerSetup>,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub risk_batch_size: usize,
    pub aggregation: AggregationConfig,
    pub attack: AttackSpec,
    pub init_scale: f64,
    pub shared_init: bool,
}

impl Setup {
    /// Per-worker train/test sizes and training label histograms.
    pub fn summary(&self) -> PartitionSummary {
        PartitionSummary {
            workers: self
                .workers
                .iter()
                .map(|w| WorkerSummary {
                    worker: w.id,
                    size: w.train.len() + w.test.len(),
                    train: w.train.len(),
                    test: w.test.len(),
                    label_histogram: self.dataset.label_histogram(&w.train),
                })
                .collect(),
        }
    }

    pub fn adversary_count(&self) -> usize {
        self.workers.iter().filter(|w| w.adversarial).count()
    }

    /// The same run with adversarial workers removed from the network. Worker
    /// ids, shards and random streams of the remaining workers are unchanged.
    pub fn without_adversaries(&self) -> Result<Setup> {
        let keep: Vec<usize> = (0..self.workers.len())
            .filter(|&i| !self.workers[i].adversarial)
            .collect();
        if keep.is_empty() {
            return Err(Error::config("attack.adversaries", "no normal workers remain"));
        }
        Ok(Setup {
            topology: self.topology.induced(&keep)?,
            workers: keep.iter().map(|&i| self.workers[i].clone()).collect(),
            attack: AttackSpec::none(),
            dataset: self.dataset.clone(),
            spec: self.spec.clone(),
            ..*self
        })
    }
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a config file and resolves relative data paths against its
    /// directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let DataConfig::Csv { path, .. } = &mut self.data {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.optimizer.batch_size == 0 {
            return Err(Error::config("optimizer.batch_size", "must be at least 1"));
        }
        if self.optimizer.risk_batch_size == Some(0) {
            return Err(Error::config("optimizer.risk_batch_size", "must be at least 1"));
        }
        self.optimizer.optimizer().validate()?;
        self.attack.validate()?;
        if !(self.model.init_scale > 0.0 && self.model.init_scale.is_finite()) {
            return Err(Error::config("model.init_scale", "must be positive"));
        }
        if self.model.layers.contains(&0) {
            return Err(Error::config("model.layers", "hidden widths must be positive"));
        }
        let p = &self.partition;
        if p.kind != PartitionKind::Subject && p.n_workers.unwrap_or(0) == 0 {
            return Err(Error::config("partition.n_workers", "must be at least 1"));
        }
        if p.kind == PartitionKind::LabelShards && p.shards_per_worker == 0 {
            return Err(Error::config("partition.shards_per_worker", "must be at least 1"));
        }
        if p.test == TestKind::Local && !(p.train_fraction > 0.0 && p.train_fraction < 1.0) {
            return Err(Error::config("partition.train_fraction", "must lie in (0, 1)"));
        }
        if p.test == TestKind::Global && !(p.global_test_fraction > 0.0 && p.global_test_fraction < 1.0) {
            return Err(Error::config("partition.global_test_fraction", "must lie in (0, 1)"));
        }
        if p.kind == PartitionKind::Subject {
            match &self.data {
                DataConfig::Csv { subject_column: Some(_), .. } => {}
                _ => {
                    return Err(Error::config(
                        "partition.kind",
                        "subject partitions need CSV data with data.subject_column",
                    ))
                }
            }
        }
        match &self.data {
            DataConfig::Blobs { spread, .. } if !(*spread >= 0.0 && spread.is_finite()) => {
                Err(Error::config("data.spread", "must be non-negative"))
            }
            _ => Ok(()),
        }
    }

    /// Loads data, partitions it and fixes every default.
    pub fn build(&self) -> Result<Setup> {
        self.validate()?;
        let (mut dataset, subjects, default_standardize) = match &self.data {
            DataConfig::Blobs {
                n_per_class,
                classes,
                d_x,
                spread,
            } => (synth_blobs(*n_per_class, *classes, *d_x, *spread, self.seed)?, None, false),
            DataConfig::Csv {
                path,
                label_column,
                subject_column,
                has_header,
            } => {
                let loaded = load_csv(
                    path,
                    &CsvOptions {
                        label_column: *label_column,
                        subject_column: *subject_column,
                        has_header: *has_header,
                    },
                )?;
                (loaded.dataset, loaded.subjects, true)
            }
        };

        let p = &self.partition;
        // (dataset positions available to the partitioner, shared test set)
        let (pool, global_test) = match p.test {
            TestKind::Local => ((0..dataset.len()).collect::<Vec<_>>(), None),
            TestKind::Global => {
                let (kept, held) = holdout_split(dataset.len(), p.global_test_fraction, self.seed)?;
                (kept, Some(held))
            }
        };
        let view = dataset.subset(&pool);
        let partition = match p.kind {
            PartitionKind::Iid => partition_iid(&view, self.n_workers()?, self.seed)?,
            PartitionKind::LabelShards => {
                partition_label_shards(&view, self.n_workers()?, p.shards_per_worker, self.seed)?
            }
            PartitionKind::Nonuniform => partition_nonuniform(&view, self.n_workers()?, self.seed)?,
            PartitionKind::Subject => {
                let subjects = subjects.expect("validated");
                let pooled: Vec<i64> = pool.iter().map(|&i| subjects[i]).collect();
                let part = partition_by_subject(&view, &pooled)?;
                if let Some(n) = p.n_workers {
                    if n != part.n_workers() {
                        return Err(Error::config(
                            "partition.n_workers",
                            format!("data has {} subjects but {n} workers were requested", part.n_workers()),
                        ));
                    }
                }
                part
            }
        };
        let partition = match p.test {
            TestKind::Local => split_train_test(&partition, p.train_fraction, self.seed)?,
            TestKind::Global => partition,
        };
        let n = partition.n_workers();
        let adversaries = self.attack.adversary_ids(n)?;
        if adversaries.len() == n {
            return Err(Error::config("attack.adversaries", "at least one worker must be normal"));
        }

        let workers: Vec<WorkerSetup> = (0..n)
            .map(|k| WorkerSetup {
                id: k,
                adversarial: adversaries.binary_search(&k).is_ok(),
                train: to_dataset_positions(&partition, k, &pool, true),
                test: match &global_test {
                    Some(held) => held.clone(),
                    None => to_dataset_positions(&partition, k, &pool, false),
                },
            })
            .collect();

        if p.standardize.unwrap_or(default_standardize) {
            let mut train: Vec<usize> = workers.iter().flat_map(|w| w.train.iter().copied()).collect();
            train.sort_unstable();
            let scaler = Standardizer::fit(&dataset.subset(&train));
            scaler.apply(&mut dataset);
        }

        let mut widths = vec![dataset.n_features()];
        widths.extend(&self.model.layers);
        widths.push(dataset.class_count());
        let spec = ModelSpec::new(widths)?.with_l2(self.model.l2)?;

        Ok(Setup {
            seed: self.seed,
            epochs: self.epochs,
            topology: self.topology.build(n, self.seed)?,
            workers,
            optimizer: self.optimizer.optimizer(),
            batch_size: self.optimizer.batch_size,
            risk_batch_size: self.optimizer.risk_batch_size.unwrap_or(self.optimizer.batch_size),
            aggregation: self.aggregation,
            attack: self.attack.clone(),
            init_scale: self.model.init_scale,
            shared_init: self.model.shared_init,
            dataset,
            spec,
        })
    }

    fn n_workers(&self) -> Result<usize> {
        self.partition
            .n_workers
            .ok_or_else(|| Error::config("partition.n_workers", "required for this partition kind"))
    }
}

fn to_dataset_positions(p: &Partition, k: usize, pool: &[usize], train: bool) -> Vec<usize> {
    let local = if train { p.train(k) } else { p.test(k) };
    local.iter().map(|&i| pool[i]).collect()
}
