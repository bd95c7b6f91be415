//! Per-domain low-rank adapters on top of the frozen backbone.
//!
//! Each domain owns one adapter with a `(W_down, W_up)` pair per layer. Only
//! the adapter of the domain being learned receives gradient updates; every
//! earlier adapter is frozen, so embeddings of learned domains never move.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{forward, BackboneParams, Gradients};
use crate::disentangle::{total_loss, LossReport, LossValues, LossWeights, PrototypeSet};
use crate::error::{Error, Result};
use crate::graph::{augment, DomainTask, Graph, Propagation, Split};
use crate::numerics::{rng, Matrix};
use crate::optim::Adam;

#[derive(Debug, Clone, PartialEq)]
pub struct LoraLayer {
    /// `d_in x r`
    pub down: Matrix,
    /// `r x d_out`
    pub up: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    domain_id: usize,
    rank: usize,
    layers: Vec<LoraLayer>,
    frozen: bool,
}

impl LoraAdapter {
    /// Rebuilds an adapter from stored weights.
    pub fn from_layers(domain_id: usize, layers: Vec<LoraLayer>, frozen: bool) -> Result<Self> {
        let rank = layers.first().map_or(0, |l| l.down.cols());
        for (i, l) in layers.iter().enumerate() {
            if l.down.cols() != rank || l.up.rows() != rank {
                return Err(Error::Validation(format!(
                    "adapter layer {i} has inconsistent rank ({:?}, {:?})",
                    l.down.shape(),
                    l.up.shape()
                )));
            }
        }
        if rank == 0 {
            return Err(Error::Validation("adapter rank must be at least 1".into()));
        }
        Ok(LoraAdapter {
            domain_id,
            rank,
            layers,
            frozen,
        })
    }

    pub fn domain_id(&self) -> usize {
        self.domain_id
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn layers(&self) -> &[LoraLayer] {
        &self.layers
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| self.rank * (l.down.rows() + l.up.cols()))
            .sum()
    }

    pub(crate) fn check_dims(&self, dims: [(usize, usize); 2]) -> Result<()> {
        if self.layers.len() != dims.len() {
            return Err(Error::Validation(format!(
                "adapter has {} layers, backbone has {}",
                self.layers.len(),
                dims.len()
            )));
        }
        for (l, (din, dout)) in self.layers.iter().zip(dims) {
            if l.down.rows() != din || l.up.cols() != dout {
                return Err(Error::Validation(format!(
                    "adapter layer ({}x{}) does not fit a {din}x{dout} weight",
                    l.down.rows(),
                    l.up.cols()
                )));
            }
        }
        Ok(())
    }

    fn apply_update(&mut self, adam: &mut Adam, grads: &[LoraLayer]) -> Result<()> {
        if self.frozen {
            return Err(Error::Validation(format!(
                "adapter of domain {} is frozen",
                self.domain_id
            )));
        }
        let mut params: Vec<&mut Matrix> = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            params.push(&mut l.down);
            params.push(&mut l.up);
        }
        let g: Vec<&Matrix> = grads.iter().flat_map(|l| [&l.down, &l.up]).collect();
        adam.step(&mut params, &g);
        Ok(())
    }
}

/// Fresh adapter with Gaussian `W_down` (std `1/√r`) and zero `W_up`, so the
/// adapted encoder starts exactly at the backbone.
pub fn init_adapter(
    domain_id: usize,
    dims: [(usize, usize); 2],
    rank: usize,
    seed: u64,
) -> Result<LoraAdapter> {
    let limit = dims.iter().map(|&(a, b)| a.min(b)).min().unwrap_or(0);
    if rank == 0 || rank >= limit {
        return Err(Error::Validation(format!(
            "adapter rank {rank} must lie in [1, {limit})"
        )));
    }
    let mut r = rng::indexed_stream(seed, "adapter/init", domain_id as u64);
    let std = 1.0 / (rank as f64).sqrt();
    let layers = dims
        .iter()
        .map(|&(din, dout)| LoraLayer {
            down: rng::gaussian_matrix(din, rank, std, &mut r),
            up: Matrix::zeros(rank, dout),
        })
        .collect();
    Ok(LoraAdapter {
        domain_id,
        rank,
        layers,
        frozen: false,
    })
}

/// Adapters keyed by domain, with at most one adapter in training at a time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdapterRegistry {
    adapters: BTreeMap<usize, LoraAdapter>,
    training: Option<usize>,
}

impl AdapterRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reserves `domain_id` for training.
    pub fn begin(&mut self, domain_id: usize) -> Result<()> {
        if let Some(d) = self.training {
            return Err(Error::Validation(format!(
                "domain {d} is still training; adapters train one at a time"
            )));
        }
        if self.adapters.contains_key(&domain_id) {
            return Err(Error::Validation(format!(
                "domain {domain_id} already has an adapter"
            )));
        }
        self.training = Some(domain_id);
        Ok(())
    }

    /// Freezes and stores the adapter reserved by [`AdapterRegistry::begin`].
    pub fn commit(&mut self, mut adapter: LoraAdapter) -> Result<()> {
        if self.training != Some(adapter.domain_id) {
            return Err(Error::Validation(format!(
                "domain {} was not reserved for training",
                adapter.domain_id
            )));
        }
        adapter.freeze();
        self.adapters.insert(adapter.domain_id, adapter);
        self.training = None;
        Ok(())
    }

    /// Inserts an already frozen adapter, as when loading a checkpoint.
    pub fn insert_frozen(&mut self, adapter: LoraAdapter) -> Result<()> {
        if !adapter.frozen {
            return Err(Error::Validation("only frozen adapters can be inserted".into()));
        }
        if self.adapters.contains_key(&adapter.domain_id) {
            return Err(Error::Validation(format!(
                "domain {} already has an adapter",
                adapter.domain_id
            )));
        }
        self.adapters.insert(adapter.domain_id, adapter);
        Ok(())
    }

    pub fn get(&self, domain_id: usize) -> Option<&LoraAdapter> {
        self.adapters.get(&domain_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LoraAdapter> {
        self.adapters.values()
    }

    pub fn len(&self) -> usize {
        self.adapters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adapters.is_empty()
    }
}

/// Settings for one domain's adapter (or ablation backbone) training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterTrainConfig {
    pub rank: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub mask_rate: f64,
    pub drop_rate: f64,
    pub loss: LossWeights,
    pub seed: u64,
}

impl Default for AdapterTrainConfig {
    fn default() -> Self {
        AdapterTrainConfig {
            rank: 16,
            epochs: 200,
            learning_rate: 5e-2,
            weight_decay: 5e-4,
            mask_rate: 0.2,
            drop_rate: 0.2,
            loss: LossWeights::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedAdapter {
    pub adapter: LoraAdapter,
    /// Loss before each epoch's update.
    pub losses: Vec<LossValues>,
}

/// Labels of train-split nodes, `None` elsewhere.
pub fn train_labels(g: &Graph) -> Vec<Option<usize>> {
    g.labels()
        .iter()
        .zip(g.split())
        .map(|(&l, &s)| if s == Split::Train { l } else { None })
        .collect()
}

/// Drops labels of nodes whose embedding is exactly zero in either view.
///
/// Such rows arise when every first-layer unit is inactive over a node's
/// neighbourhood; cosine similarity is undefined for them, and the inactive
/// units already pass them no gradient.
fn contrastive_labels(labels: &[Option<usize>], x: &Matrix, x_aug: &Matrix) -> Vec<Option<usize>> {
    let zero = |m: &Matrix, i: usize| m.row(i).iter().all(|&v| v == 0.0);
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| l.filter(|_| !zero(x, i) && !zero(x_aug, i)))
        .collect()
}

/// Objective value and parameter gradients for the original and one augmented view.
///
/// Labeled nodes with an all-zero embedding in either view are left out of
/// the contrastive term for this evaluation.
pub fn objective_and_gradients(
    graph: &Graph,
    view: &Graph,
    backbone: &BackboneParams,
    adapter: Option<&LoraAdapter>,
    labels: &[Option<usize>],
    prototypes: &PrototypeSet,
    weights: &LossWeights,
) -> Result<(LossReport, Gradients)> {
    let prop = Propagation::new(graph);
    let prop_view = Propagation::new(view);
    let (x, tape) = forward(&prop, graph.features(), backbone, adapter)?;
    let (x_aug, tape_aug) = forward(&prop_view, view.features(), backbone, adapter)?;
    let labels = contrastive_labels(labels, &x, &x_aug);
    let report = total_loss(&x, &x_aug, &labels, prototypes, weights)?;
    let mut grads = tape.backward(&report.grad_x)?;
    let grads_aug = tape_aug.backward(&report.grad_x_aug)?;
    grads.w1.add_scaled(&grads_aug.w1, 1.0);
    grads.w2.add_scaled(&grads_aug.w2, 1.0);
    if let (Some(a), Some(b)) = (grads.adapter.as_mut(), grads_aug.adapter.as_ref()) {
        for (la, lb) in a.iter_mut().zip(b) {
            la.down.add_scaled(&lb.down, 1.0);
            la.up.add_scaled(&lb.up, 1.0);
        }
    }
    Ok((report, grads))
}

fn augmentation_seed(cfg: &AdapterTrainConfig, domain_id: usize, epoch: usize) -> u64 {
    let label = format!("adapter/augment/{domain_id}");
    rng::indexed_stream(cfg.seed, &label, epoch as u64).random()
}

fn check_task(task: &DomainTask, backbone: &BackboneParams) -> Result<()> {
    if task.graph.feature_dim() != backbone.input_dim() {
        return Err(Error::Validation(format!(
            "domain {} features have width {}, backbone expects {}",
            task.domain_id,
            task.graph.feature_dim(),
            backbone.input_dim()
        )));
    }
    Ok(())
}

/// Trains a fresh adapter for `task` against the frozen backbone and returns
/// it frozen. `task.graph` must carry aligned features.
pub fn train_adapter(
    task: &DomainTask,
    backbone: &BackboneParams,
    prototypes: &PrototypeSet,
    cfg: &AdapterTrainConfig,
) -> Result<TrainedAdapter> {
    if !backbone.is_frozen() {
        return Err(Error::Validation(
            "adapters train against a frozen backbone".into(),
        ));
    }
    check_task(task, backbone)?;
    let mut adapter = init_adapter(task.domain_id, backbone.layer_dims(), cfg.rank, cfg.seed)?;
    let labels = train_labels(&task.graph);
    let mut adam = Adam::new(cfg.learning_rate, cfg.weight_decay);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let seed = augmentation_seed(cfg, task.domain_id, epoch);
        let view = augment(&task.graph, cfg.mask_rate, cfg.drop_rate, seed)?;
        let (report, grads) = objective_and_gradients(
            &task.graph,
            &view,
            backbone,
            Some(&adapter),
            &labels,
            prototypes,
            &cfg.loss,
        )?;
        if !report.total.is_finite() {
            return Err(Error::Numerical(format!(
                "adapter loss diverged at epoch {epoch}"
            )));
        }
        let grads = grads.adapter.expect("adapter was attached");
        adapter.apply_update(&mut adam, &grads)?;
        losses.push(report.without_gradients());
    }
    adapter.freeze();
    Ok(TrainedAdapter { adapter, losses })
}

/// Ablation without adapters: the same objective, applied directly to a
/// shared unfrozen backbone, which therefore drifts across domains.
pub fn train_backbone_directly(
    task: &DomainTask,
    backbone: &mut BackboneParams,
    prototypes: &PrototypeSet,
    cfg: &AdapterTrainConfig,
) -> Result<Vec<LossValues>> {
    check_task(task, backbone)?;
    let labels = train_labels(&task.graph);
    let mut adam = Adam::new(cfg.learning_rate, cfg.weight_decay);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let seed = augmentation_seed(cfg, task.domain_id, epoch);
        let view = augment(&task.graph, cfg.mask_rate, cfg.drop_rate, seed)?;
        let (report, grads) = objective_and_gradients(
            &task.graph, &view, backbone, None, &labels, prototypes, &cfg.loss,
        )?;
        if !report.total.is_finite() {
            return Err(Error::Numerical(format!(
                "backbone loss diverged at epoch {epoch}"
            )));
        }
        backbone.apply_update(&mut adam, &grads)?;
        losses.push(report.without_gradients());
    }
    Ok(losses)
}
