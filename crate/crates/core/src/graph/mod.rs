//! Graph representation and the per-domain data pipeline: normalized
//! propagation, feature alignment, augmentation, synthetic suites and the
//! on-disk dataset format.

mod adjacency;
mod align;
mod augment;
mod io;
mod synth;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub use adjacency::{normalized_adjacency, Propagation};
pub use align::{align_features, FeatureAlignment};
pub use augment::augment;
pub use io::{load_dataset, save_dataset, DatasetMeta};
pub use synth::{synth_domain_suite, SynthSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Undirected node-attributed graph with optional labels and a split tag per node.
///
/// Edges are stored once as `(lo, hi)` with `lo < hi`, sorted and deduplicated.
/// Self-loops are never stored; propagation adds them.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub name: String,
    edges: Vec<(usize, usize)>,
    features: Matrix,
    labels: Vec<Option<usize>>,
    split: Vec<Split>,
    num_classes: usize,
}

impl Graph {
    pub fn new(
        name: impl Into<String>,
        features: Matrix,
        edges: Vec<(usize, usize)>,
        labels: Vec<Option<usize>>,
        split: Vec<Split>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n || split.len() != n {
            return Err(Error::Validation(format!(
                "{n} feature rows but {} labels and {} split tags",
                labels.len(),
                split.len()
            )));
        }
        features.ensure_finite("node features")?;
        let mut norm = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Bounds(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if u == v {
                return Err(Error::Validation(format!("self-loop on node {u}")));
            }
            norm.push((u.min(v), u.max(v)));
        }
        norm.sort_unstable();
        norm.dedup();
        if let Some((i, l)) = labels
            .iter()
            .enumerate()
            .find_map(|(i, l)| l.filter(|&l| l >= num_classes).map(|l| (i, l)))
        {
            return Err(Error::Bounds(format!(
                "node {i} has label {l} but the graph declares {num_classes} classes"
            )));
        }
        Ok(Graph {
            name: name.into(),
            edges: norm,
            features,
            labels,
            split,
            num_classes,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    /// Same topology and labels with a different feature matrix.
    pub fn with_features(&self, features: Matrix) -> Result<Self> {
        if features.rows() != self.num_nodes() {
            return Err(Error::Validation(format!(
                "replacement features have {} rows, graph has {} nodes",
                features.rows(),
                self.num_nodes()
            )));
        }
        features.ensure_finite("node features")?;
        Ok(Graph {
            features,
            ..self.clone()
        })
    }

    pub(crate) fn with_edges_unchecked(&self, edges: Vec<(usize, usize)>) -> Self {
        Graph {
            edges,
            ..self.clone()
        }
    }

    /// Labeled nodes carrying the given split tag, in index order.
    pub fn labeled_nodes(&self, split: Split) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&i| self.split[i] == split && self.labels[i].is_some())
            .collect()
    }
}

/// One step of the incremental sequence: a graph whose local labels
/// `0..num_classes` map onto the global classes `class_block`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainTask {
    pub domain_id: usize,
    pub graph: Graph,
    pub class_block: Range<usize>,
}

impl DomainTask {
    pub fn new(domain_id: usize, graph: Graph, class_offset: usize) -> Self {
        let class_block = class_offset..class_offset + graph.num_classes();
        DomainTask {
            domain_id,
            graph,
            class_block,
        }
    }

    pub fn global_label(&self, node: usize) -> Option<usize> {
        self.graph.labels[node].map(|l| self.class_block.start + l)
    }
}

/// Checks that class blocks are pairwise disjoint.
pub fn check_disjoint_blocks(tasks: &[DomainTask]) -> Result<()> {
    for (i, a) in tasks.iter().enumerate() {
        for b in &tasks[i + 1..] {
            if a.class_block.start < b.class_block.end && b.class_block.start < a.class_block.end {
                return Err(Error::Validation(format!(
                    "class blocks {:?} (domain {}) and {:?} (domain {}) overlap",
                    a.class_block, a.domain_id, b.class_block, b.domain_id
                )));
            }
        }
    }
    Ok(())
}
