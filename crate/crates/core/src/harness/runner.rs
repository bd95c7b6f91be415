use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backbone::{forward, pretrain_link_prediction, BackboneParams};
use crate::disentangle::{extract_prototypes, LossValues, PrototypeSet};
use crate::domain_id::{pooled_projection, ProjectionParams};
use crate::error::{Error, Result};
use crate::graph::{save_dataset, DomainTask, FeatureAlignment, Propagation, Split};
use crate::keeper::{one_hot, ClassBlock, RidgeState};
use crate::peft::{train_adapter, train_backbone_directly, train_labels, AdapterRegistry};

use super::checkpoint::{save_backbone, save_checkpoint};
use super::config::{Ablation, RunConfig};
use super::metrics::{metrics, AccuracyMatrix};
use super::model::{split_accuracy, DomainRecord, Model};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Evaluate with the true domain instead of the discriminated one.
    pub oracle_domains: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSummary {
    pub domain_id: usize,
    pub num_nodes: usize,
    pub class_block: ClassBlock,
    pub embedding_prototypes: usize,
    pub trainable_parameters: usize,
    pub first_loss: Option<LossValues>,
    pub last_loss: Option<LossValues>,
}

/// Deterministic outcome of a run. Wall-clock measurements live in
/// [`Timings`] so that this report is byte-identical across repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub oracle_domains: bool,
    pub accuracy_matrix: AccuracyMatrix,
    pub average_accuracy: f64,
    pub average_forgetting: f64,
    /// `[true domain][chosen domain]` counts over every evaluation call.
    pub discrimination_confusion: Vec<Vec<u64>>,
    pub discrimination_accuracy: f64,
    pub class_blocks: Vec<ClassBlock>,
    pub pretrain_first_loss: Option<f64>,
    pub pretrain_last_loss: Option<f64>,
    pub domains: Vec<DomainSummary>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainTiming {
    pub domain_id: usize,
    pub train_seconds: f64,
    pub eval_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub pretrain_seconds: f64,
    pub domains: Vec<DomainTiming>,
}

#[cfg(not(target_arch = "wasm32"))]
struct Stopwatch(std::time::Instant);

#[cfg(not(target_arch = "wasm32"))]
impl Stopwatch {
    fn start() -> Self {
        Stopwatch(std::time::Instant::now())
    }

    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

// No monotonic clock on bare wasm; timings read as zero there.
#[cfg(target_arch = "wasm32")]
struct Stopwatch;

#[cfg(target_arch = "wasm32")]
impl Stopwatch {
    fn start() -> Self {
        Stopwatch
    }

    fn seconds(&self) -> f64 {
        0.0
    }
}

/// The incremental learner, fed one domain at a time.
pub struct Learner {
    config: RunConfig,
    options: RunOptions,
    projection: ProjectionParams,
    model: Option<Model>,
    seen: Vec<DomainTask>,
    matrix: AccuracyMatrix,
    confusion: Vec<Vec<u64>>,
    summaries: Vec<DomainSummary>,
    timings: Timings,
    pretrain_losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: Model,
    pub report: RunReport,
    pub timings: Timings,
}

impl Learner {
    /// Validates the config and draws the frozen domain projection.
    pub fn new(config: RunConfig, options: RunOptions) -> Result<Self> {
        config.validate()?;
        let projection = ProjectionParams::new(config.align_dim, config.projection_dim, config.seed)?;
        Ok(Learner {
            config,
            options,
            projection,
            model: None,
            seen: Vec::new(),
            matrix: AccuracyMatrix::new(),
            confusion: Vec::new(),
            summaries: Vec::new(),
            timings: Timings::default(),
            pretrain_losses: Vec::new(),
        })
    }

    pub fn model(&self) -> Option<&Model> {
        self.model.as_ref()
    }

    pub fn accuracy_matrix(&self) -> &AccuracyMatrix {
        &self.matrix
    }

    /// Learns one domain: align, (pretrain on the first), train its adapter,
    /// extract embedding prototypes, update the classifier, store the
    /// domain summary.
    pub fn learn(&mut self, task: &DomainTask) -> Result<()> {
        let id = task.domain_id;
        self.learn_inner(task).map_err(|e| e.in_domain(id))
    }

    fn learn_inner(&mut self, task: &DomainTask) -> Result<()> {
        if self.seen.iter().any(|t| t.domain_id == task.domain_id) {
            return Err(Error::Validation("domain was already learned".into()));
        }
        if let Some(t) = self.seen.iter().find(|t| {
            t.class_block.start < task.class_block.end && task.class_block.start < t.class_block.end
        }) {
            return Err(Error::Validation(format!(
                "class block {:?} overlaps {:?} of domain {}",
                task.class_block, t.class_block, t.domain_id
            )));
        }
        let cfg = &self.config;
        let clock = Stopwatch::start();
        let alignment = FeatureAlignment::fit(task.graph.features(), cfg.align_dim)?;
        let graph = task.graph.with_features(alignment.apply(task.graph.features())?)?;
        let aligned = DomainTask {
            domain_id: task.domain_id,
            graph,
            class_block: task.class_block.clone(),
        };

        let mut fresh = match self.model {
            Some(_) => None,
            None => {
                let pre = pretrain_link_prediction(&aligned.graph, &cfg.pretrain_config())?;
                self.timings.pretrain_seconds = clock.seconds();
                self.pretrain_losses = pre.losses;
                let mut params = pre.params;
                if cfg.ablation == Ablation::NoAdapters {
                    params = BackboneParams::from_weights(params.w1().clone(), params.w2().clone(), false)?;
                }
                Some(params)
            }
        };
        let prototypes = self.model.as_ref().map(|m| m.prototypes.clone()).unwrap_or_default();
        let backbone: &mut BackboneParams = match (fresh.as_mut(), self.model.as_mut()) {
            (Some(b), _) => b,
            (None, Some(m)) => &mut m.backbone,
            (None, None) => unreachable!("backbone exists after the first domain"),
        };
        let adapter_cfg = cfg.adapter_config();
        let (adapter, losses, trainable) = if cfg.ablation == Ablation::NoAdapters {
            let losses = train_backbone_directly(&aligned, backbone, &prototypes, &adapter_cfg)?;
            (None, losses, backbone.parameter_count())
        } else {
            let trained = train_adapter(&aligned, backbone, &prototypes, &adapter_cfg)?;
            let params = trained.adapter.parameter_count();
            (Some(trained.adapter), trained.losses, params)
        };
        let backbone_ref: &BackboneParams = backbone;
        let prop = Propagation::new(&aligned.graph);
        let (x, _) = forward(&prop, aligned.graph.features(), backbone_ref, adapter.as_ref())?;
        x.ensure_finite("domain embeddings")?;
        let labels = train_labels(&aligned.graph);
        let protos = extract_prototypes(&x, &labels, cfg.dbscan_eps, cfg.dbscan_min_pts, task.domain_id)?;
        let proto_count = protos.len();

        let train_nodes = aligned.graph.labeled_nodes(Split::Train);
        if train_nodes.is_empty() {
            return Err(Error::Validation("domain has no labeled training nodes".into()));
        }
        let xt = x.select_rows(&train_nodes);
        let local: Vec<usize> = train_nodes.iter().map(|&i| labels[i].expect("labeled")).collect();
        let yt = one_hot(&local, aligned.class_block.len())?;
        let block = ClassBlock::new(task.domain_id, task.class_block.clone());
        let summary_vec = pooled_projection(&prop, aligned.graph.features(), &self.projection)?;
        let record = DomainRecord {
            domain_id: task.domain_id,
            class_block: task.class_block.clone(),
            alignment,
            prototype: summary_vec,
        };

        match (self.model.as_mut(), fresh) {
            (None, Some(backbone)) => {
                let mut adapters = AdapterRegistry::new();
                if let Some(a) = adapter {
                    adapters.begin(task.domain_id)?;
                    adapters.commit(a)?;
                }
                let mut set = PrototypeSet::new();
                set.extend(protos)?;
                self.model = Some(Model {
                    config: self.config.clone(),
                    backbone,
                    adapters,
                    ridge: RidgeState::init(&xt, &yt, self.config.lambda, block)?,
                    prototypes: set,
                    projection: self.projection.clone(),
                    domains: vec![record],
                });
            }
            (Some(model), None) => {
                if let Some(a) = adapter {
                    model.adapters.begin(task.domain_id)?;
                    model.adapters.commit(a)?;
                }
                model.prototypes.extend(protos)?;
                if self.config.ablation == Ablation::NoPreservation {
                    model.ridge = RidgeState::init(&xt, &yt, self.config.lambda, block)?;
                } else {
                    model.ridge.update(&xt, &yt, block)?;
                }
                model.domains.push(record);
            }
            _ => unreachable!("backbone is created exactly once"),
        }

        self.summaries.push(DomainSummary {
            domain_id: task.domain_id,
            num_nodes: task.graph.num_nodes(),
            class_block: ClassBlock::new(task.domain_id, task.class_block.clone()),
            embedding_prototypes: proto_count,
            trainable_parameters: trainable,
            first_loss: losses.first().copied(),
            last_loss: losses.last().copied(),
        });
        self.timings.domains.push(DomainTiming {
            domain_id: task.domain_id,
            train_seconds: clock.seconds(),
            eval_seconds: 0.0,
        });
        self.seen.push(task.clone());
        for row in &mut self.confusion {
            row.push(0);
        }
        self.confusion.push(vec![0; self.seen.len()]);
        Ok(())
    }

    /// Test-split accuracy on every learned domain through the inference
    /// path; appends one row to the accuracy matrix.
    pub fn evaluate(&mut self) -> Result<Vec<f64>> {
        let clock = Stopwatch::start();
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| Error::Validation("nothing has been learned yet".into()))?;
        let mut row = Vec::with_capacity(self.seen.len());
        for (j, task) in self.seen.iter().enumerate() {
            let forced = self.options.oracle_domains.then_some(task.domain_id);
            let out = model
                .infer(&task.graph, forced)
                .map_err(|e| e.in_domain(task.domain_id))?;
            let chosen = self
                .seen
                .iter()
                .position(|t| t.domain_id == out.domain_id)
                .expect("chosen domain was learned");
            self.confusion[j][chosen] += 1;
            let acc = split_accuracy(&task.graph, &out.classes, task.class_block.start, Split::Test)
                .ok_or_else(|| {
                    Error::Validation("domain has no labeled test nodes".into()).in_domain(task.domain_id)
                })?;
            row.push(acc);
        }
        self.matrix.push_row(row.clone())?;
        if let Some(t) = self.timings.domains.last_mut() {
            t.eval_seconds = clock.seconds();
        }
        Ok(row)
    }

    pub fn finish(self) -> Result<RunOutcome> {
        let model = self
            .model
            .ok_or_else(|| Error::Validation("a run needs at least one domain".into()))?;
        let (aa, af) = metrics(&self.matrix)?;
        let total: u64 = self.confusion.iter().flatten().sum();
        let hits: u64 = (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum();
        let report = RunReport {
            config: self.config,
            oracle_domains: self.options.oracle_domains,
            accuracy_matrix: self.matrix,
            average_accuracy: aa,
            average_forgetting: af,
            discrimination_accuracy: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
            discrimination_confusion: self.confusion,
            class_blocks: model.ridge.blocks().to_vec(),
            pretrain_first_loss: self.pretrain_losses.first().copied(),
            pretrain_last_loss: self.pretrain_losses.last().copied(),
            domains: self.summaries,
        };
        Ok(RunOutcome {
            model,
            report,
            timings: self.timings,
        })
    }
}

/// Learns the domains in order, evaluating after each one.
pub fn run_sequence(config: &RunConfig, tasks: &[DomainTask], options: RunOptions) -> Result<RunOutcome> {
    if tasks.is_empty() {
        return Err(Error::Validation("a run needs at least one domain".into()));
    }
    let mut learner = Learner::new(config.clone(), options)?;
    for task in tasks {
        learner.learn(task)?;
        learner.evaluate()?;
    }
    learner.finish()
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

pub const LOCK_FILE: &str = ".gdil.lock";

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Validation(format!(
                "{} exists: another run is using this directory",
                path.display()
            ))),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs the configured sequence and writes the checkpoint, a copy of each
/// domain's dataset, `report.json`, `accuracy.csv` and `timings.json`.
pub fn run_to_dir(config: &RunConfig, out: &Path, options: RunOptions) -> Result<RunOutcome> {
    let _lock = RunLock::acquire(out)?;
    let tasks = config.load_tasks()?;
    let outcome = run_sequence(config, &tasks, options)?;
    save_checkpoint(&outcome.model, out)?;
    for task in &tasks {
        save_dataset(&task.graph, out.join("data").join(format!("domain_{}", task.domain_id)))?;
    }
    write_text(&out.join("report.json"), &outcome.report.to_json())?;
    write_text(&out.join("accuracy.csv"), &outcome.report.accuracy_matrix.to_csv())?;
    let mut timings = serde_json::to_string_pretty(&outcome.timings).expect("timings serialize");
    timings.push('\n');
    write_text(&out.join("timings.json"), &timings)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainLog {
    pub losses: Vec<f64>,
}

/// Pretrains the backbone on the first configured domain and stores it.
pub fn pretrain_to_dir(config: &RunConfig, out: &Path) -> Result<PretrainLog> {
    config.validate()?;
    let _lock = RunLock::acquire(out)?;
    let tasks = config.load_tasks()?;
    let first = tasks
        .first()
        .ok_or_else(|| Error::Validation("no domains configured".into()))?;
    let aligned = FeatureAlignment::fit(first.graph.features(), config.align_dim)
        .and_then(|a| a.apply(first.graph.features()))
        .and_then(|f| first.graph.with_features(f))
        .map_err(|e| e.in_domain(first.domain_id))?;
    let pre = pretrain_link_prediction(&aligned, &config.pretrain_config()).map_err(|e| e.in_domain(first.domain_id))?;
    save_backbone(&pre.params, out)?;
    let log = PretrainLog { losses: pre.losses };
    let mut json = serde_json::to_string_pretty(&log).expect("log serializes");
    json.push('\n');
    write_text(&out.join("pretrain.json"), &json)?;
    Ok(log)
}
