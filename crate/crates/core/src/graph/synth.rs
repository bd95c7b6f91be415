use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DomainTask, Graph, Split};
use crate::error::{Error, Result};
use crate::numerics::{rng, Matrix};

/// Parameters of a seeded multi-domain stochastic-block-model suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_domains: usize,
    pub classes_per_domain: usize,
    pub nodes_per_class: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub mean_separation: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_domains: 4,
            classes_per_domain: 3,
            nodes_per_class: 60,
            p_in: 0.2,
            p_out: 0.02,
            feature_dim: 100,
            mean_separation: 5.0,
            seed: 7,
        }
    }
}

const TRAIN_FRACTION: f64 = 0.6;
const VAL_FRACTION: f64 = 0.2;

/// Generates `num_domains` independent SBM graphs.
///
/// Domain `d`, class `c` draws node features from `N(μ_{d,c}, I)` where
/// `μ_{d,c}` is `mean_separation` times a basis vector chosen per domain
/// and class (cycling through the feature axes), so classes within and
/// across domains occupy different directions. Within each class, nodes are
/// split 60/20/20 into train/val/test.
pub fn synth_domain_suite(spec: &SynthSpec) -> Result<Vec<DomainTask>> {
    if spec.num_domains == 0
        || spec.classes_per_domain == 0
        || spec.nodes_per_class == 0
        || spec.feature_dim == 0
    {
        return Err(Error::Validation("synthetic suite counts must be at least 1".into()));
    }
    for (name, p) in [("p_in", spec.p_in), ("p_out", spec.p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Validation(format!("{name} {p} outside [0, 1]")));
        }
    }
    let c = spec.classes_per_domain;
    (0..spec.num_domains)
        .map(|d| {
            let graph = synth_domain(spec, d)?;
            Ok(DomainTask::new(d, graph, d * c))
        })
        .collect()
}

fn synth_domain(spec: &SynthSpec, domain: usize) -> Result<Graph> {
    let c = spec.classes_per_domain;
    let n = c * spec.nodes_per_class;
    let labels: Vec<usize> = (0..n).map(|i| i / spec.nodes_per_class).collect();

    let mut r = rng::indexed_stream(spec.seed, "synth/edges", domain as u64);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] { spec.p_in } else { spec.p_out };
            if r.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let mut r = rng::indexed_stream(spec.seed, "synth/features", domain as u64);
    let features = Matrix::from_fn(n, spec.feature_dim, |i, j| {
        let axis = (domain * c + labels[i]) % spec.feature_dim;
        let mean = if j == axis { spec.mean_separation } else { 0.0 };
        mean + r.sample::<f64, _>(StandardNormal)
    });

    let mut r = rng::indexed_stream(spec.seed, "synth/split", domain as u64);
    let mut split = vec![Split::Test; n];
    for class in 0..c {
        let mut members: Vec<usize> = (class * spec.nodes_per_class..(class + 1) * spec.nodes_per_class).collect();
        members.shuffle(&mut r);
        let m = members.len();
        let n_train = ((m as f64 * TRAIN_FRACTION).round() as usize).max(1);
        let n_val = (m as f64 * VAL_FRACTION).round() as usize;
        for (rank, &node) in members.iter().enumerate() {
            split[node] = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }

    Graph::new(
        format!("synthetic-domain-{domain}"),
        features,
        edges,
        labels.into_iter().map(Some).collect(),
        split,
        c,
    )
}
