use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backbone::PretrainConfig;
use crate::disentangle::{LossWeights, DEFAULT_MIN_PTS};
use crate::domain_id::DEFAULT_PROJECTION_DIM;
use crate::error::{Error, Result};
use crate::graph::{load_dataset, synth_domain_suite, DomainTask, SynthSpec};
use crate::peft::AdapterTrainConfig;

/// Which part of the method a run switches off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// The classifier is refit on the newest domain alone after every step.
    NoPreservation,
    /// No adapters: the pretrained backbone itself is trained on every domain.
    NoAdapters,
}

/// Every knob of a sequence run. Read from a flat TOML document whose keys
/// are exactly these field names; omitted keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Shared feature width after alignment.
    pub align_dim: usize,
    pub hidden_dim: usize,
    pub rank: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    pub epsilon: f64,
    pub lambda: f64,
    /// Epochs for pretraining and for each domain's adapter.
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub mask_rate: f64,
    pub drop_rate: f64,
    /// Clustering radius; omitted means the median 4-nearest-neighbour distance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dbscan_eps: Option<f64>,
    pub dbscan_min_pts: usize,
    pub projection_dim: usize,
    pub seed: u64,
    /// Dataset directories in domain order. Empty selects the synthetic suite.
    pub datasets: Vec<PathBuf>,
    pub synth_domains: usize,
    pub synth_classes: usize,
    pub synth_nodes_per_class: usize,
    pub synth_p_in: f64,
    pub synth_p_out: f64,
    pub synth_feature_dim: usize,
    pub synth_mean_separation: f64,
    pub synth_seed: u64,
    pub ablation: Ablation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthSpec::default();
        let adapter = AdapterTrainConfig::default();
        let loss = LossWeights::default();
        RunConfig {
            align_dim: 64,
            hidden_dim: 64,
            rank: adapter.rank,
            gamma1: loss.gamma1,
            gamma2: loss.gamma2,
            epsilon: loss.epsilon,
            lambda: 1.0,
            epochs: adapter.epochs,
            learning_rate: adapter.learning_rate,
            weight_decay: adapter.weight_decay,
            mask_rate: adapter.mask_rate,
            drop_rate: adapter.drop_rate,
            dbscan_eps: None,
            dbscan_min_pts: DEFAULT_MIN_PTS,
            projection_dim: DEFAULT_PROJECTION_DIM,
            seed: 0,
            datasets: Vec::new(),
            synth_domains: synth.num_domains,
            synth_classes: synth.classes_per_domain,
            synth_nodes_per_class: synth.nodes_per_class,
            synth_p_in: synth.p_in,
            synth_p_out: synth.p_out,
            synth_feature_dim: synth.feature_dim,
            synth_mean_separation: synth.mean_separation,
            synth_seed: synth.seed,
            ablation: Ablation::None,
            output_dir: None,
        }
    }
}

fn bad(msg: String) -> Error {
    Error::Config(msg)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| bad(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative dataset and output paths are resolved
    /// against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| bad(format!("{}: {}", path.display(), e.to_string().trim_start_matches("config error: "))))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for d in &mut cfg.datasets {
            if d.is_relative() {
                *d = base.join(&*d);
            }
        }
        if let Some(out) = cfg.output_dir.as_mut() {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("align_dim", self.align_dim),
            ("hidden_dim", self.hidden_dim),
            ("rank", self.rank),
            ("dbscan_min_pts", self.dbscan_min_pts),
            ("projection_dim", self.projection_dim),
            ("synth_domains", self.synth_domains),
            ("synth_classes", self.synth_classes),
            ("synth_nodes_per_class", self.synth_nodes_per_class),
            ("synth_feature_dim", self.synth_feature_dim),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(bad(format!("{name} must be at least 1")));
            }
        }
        let rates = [
            ("mask_rate", self.mask_rate),
            ("drop_rate", self.drop_rate),
            ("synth_p_in", self.synth_p_in),
            ("synth_p_out", self.synth_p_out),
        ];
        for (name, v) in rates {
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        let nonneg = [
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("learning_rate", self.learning_rate),
            ("weight_decay", self.weight_decay),
            ("synth_mean_separation", self.synth_mean_separation),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(bad(format!("{name} = {v} must be a finite non-negative number")));
            }
        }
        for (name, v) in [("lambda", self.lambda), ("epsilon", self.epsilon)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(bad(format!("{name} = {v} must be positive")));
            }
        }
        if let Some(eps) = self.dbscan_eps {
            if !(eps > 0.0) || !eps.is_finite() {
                return Err(bad(format!("dbscan_eps = {eps} must be positive")));
            }
        }
        let limit = self.align_dim.min(self.hidden_dim);
        if self.ablation != Ablation::NoAdapters && self.rank >= limit {
            return Err(bad(format!(
                "rank {} must be below min(align_dim, hidden_dim) = {limit}",
                self.rank
            )));
        }
        Ok(())
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            num_domains: self.synth_domains,
            classes_per_domain: self.synth_classes,
            nodes_per_class: self.synth_nodes_per_class,
            p_in: self.synth_p_in,
            p_out: self.synth_p_out,
            feature_dim: self.synth_feature_dim,
            mean_separation: self.synth_mean_separation,
            seed: self.synth_seed,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            epsilon: self.epsilon,
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            hidden_dim: self.hidden_dim,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            seed: self.seed,
        }
    }

    pub fn adapter_config(&self) -> AdapterTrainConfig {
        AdapterTrainConfig {
            rank: self.rank,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            mask_rate: self.mask_rate,
            drop_rate: self.drop_rate,
            loss: self.loss_weights(),
            seed: self.seed,
        }
    }

    /// The domain sequence: the listed datasets with consecutive class
    /// blocks, or the synthetic suite.
    pub fn load_tasks(&self) -> Result<Vec<DomainTask>> {
        if self.datasets.is_empty() {
            return synth_domain_suite(&self.synth_spec());
        }
        let mut offset = 0;
        let mut tasks = Vec::with_capacity(self.datasets.len());
        for (d, dir) in self.datasets.iter().enumerate() {
            let graph = load_dataset(dir).map_err(|e| e.in_domain(d))?;
            let task = DomainTask::new(d, graph, offset);
            offset = task.class_block.end;
            tasks.push(task);
        }
        Ok(tasks)
    }
}
