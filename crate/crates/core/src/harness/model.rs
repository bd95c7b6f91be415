use std::ops::Range;

use crate::backbone::{forward, BackboneParams};
use crate::disentangle::PrototypeSet;
use crate::domain_id::{pooled_projection, prototype_distances, DomainPrototype, ProjectionParams};
use crate::error::{Error, Result};
use crate::graph::{FeatureAlignment, Graph, Propagation, Split};
use crate::keeper::RidgeState;
use crate::numerics::Matrix;
use crate::peft::AdapterRegistry;

use super::config::RunConfig;

/// What the model keeps about a learned domain: its feature alignment, its
/// classes and its projected summary. No node data is retained.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainRecord {
    pub domain_id: usize,
    pub class_block: Range<usize>,
    pub alignment: FeatureAlignment,
    pub prototype: Vec<f64>,
}

/// Everything needed to classify a graph after (part of) a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: RunConfig,
    pub backbone: BackboneParams,
    pub adapters: AdapterRegistry,
    pub ridge: RidgeState,
    pub prototypes: PrototypeSet,
    pub projection: ProjectionParams,
    pub domains: Vec<DomainRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub domain_id: usize,
    /// `(domain_id, distance)` for every domain whose raw width matches.
    pub distances: Vec<(usize, f64)>,
    pub probabilities: Matrix,
    /// Global class per node.
    pub classes: Vec<usize>,
}

impl Model {
    pub fn record(&self, domain_id: usize) -> Result<&DomainRecord> {
        self.domains
            .iter()
            .find(|d| d.domain_id == domain_id)
            .ok_or_else(|| Error::Validation(format!("domain {domain_id} has not been learned")))
    }

    pub fn domain_prototypes(&self) -> Vec<DomainPrototype> {
        self.domains
            .iter()
            .map(|d| DomainPrototype {
                domain_id: d.domain_id,
                vector: d.prototype.clone(),
            })
            .collect()
    }

    /// Embeddings of a raw graph as if it came from `domain_id`.
    pub fn embed(&self, graph: &Graph, domain_id: usize) -> Result<Matrix> {
        let rec = self.record(domain_id)?;
        let aligned = rec.alignment.apply(graph.features())?;
        let prop = Propagation::new(graph);
        let (x, _) = forward(&prop, &aligned, &self.backbone, self.adapters.get(domain_id))?;
        Ok(x)
    }

    /// Distance from the graph's projected summary to each compatible
    /// domain's. Each candidate domain aligns the graph with its own map.
    pub fn domain_distances(&self, graph: &Graph) -> Result<Vec<(usize, f64)>> {
        let prop = Propagation::new(graph);
        let mut out = Vec::new();
        for rec in &self.domains {
            if rec.alignment.input_dim() != graph.feature_dim() {
                continue;
            }
            let aligned = rec.alignment.apply(graph.features())?;
            let summary = pooled_projection(&prop, &aligned, &self.projection)?;
            let proto = DomainPrototype {
                domain_id: rec.domain_id,
                vector: rec.prototype.clone(),
            };
            out.push((rec.domain_id, prototype_distances(&summary, &[proto])?[0]));
        }
        if out.is_empty() {
            return Err(Error::Validation(format!(
                "no learned domain has raw feature width {}",
                graph.feature_dim()
            )));
        }
        Ok(out)
    }

    /// Picks the domain (nearest summary, or `forced`), then classifies
    /// every node with that domain's adapter and the shared classifier.
    pub fn infer(&self, graph: &Graph, forced: Option<usize>) -> Result<Inference> {
        if graph.num_nodes() == 0 {
            return Err(Error::Validation("cannot classify an empty graph".into()));
        }
        let (domain_id, distances) = match forced {
            Some(k) => (self.record(k)?.domain_id, Vec::new()),
            None => {
                let distances = self.domain_distances(graph)?;
                let best = distances
                    .iter()
                    .copied()
                    .reduce(|a, b| if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a })
                    .expect("non-empty");
                (best.0, distances)
            }
        };
        let x = self.embed(graph, domain_id)?;
        let p = self.ridge.predict(&x)?;
        Ok(Inference {
            domain_id,
            distances,
            probabilities: p.probabilities,
            classes: p.classes,
        })
    }
}

/// Fraction of labeled `split` nodes whose predicted global class equals
/// `class_offset + label`. `None` when there are no such nodes.
pub fn split_accuracy(graph: &Graph, classes: &[usize], class_offset: usize, split: Split) -> Option<f64> {
    let nodes = graph.labeled_nodes(split);
    if nodes.is_empty() {
        return None;
    }
    let correct = nodes
        .iter()
        .filter(|&&i| Some(classes[i]) == graph.labels()[i].map(|l| l + class_offset))
        .count();
    Some(correct as f64 / nodes.len() as f64)
}
