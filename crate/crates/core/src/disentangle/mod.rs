//! Training objectives that keep classes apart within a domain and keep
//! each new domain away from the embedding prototypes of earlier ones.

mod dbscan;
mod loss;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{squared_distance, Matrix};

pub use dbscan::{dbscan, NOISE};
pub use loss::{inter_loss, intra_loss};

/// A representative embedding of an earlier domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub domain_id: usize,
    pub cluster_id: usize,
    pub vector: Vec<f64>,
}

/// Append-only collection of embedding prototypes across the sequence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrototypeSet {
    entries: Vec<Prototype>,
}

impl PrototypeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn extend(&mut self, protos: impl IntoIterator<Item = Prototype>) -> Result<()> {
        for p in protos {
            if let Some(first) = self.entries.first() {
                if first.vector.len() != p.vector.len() {
                    return Err(Error::Validation(format!(
                        "prototype width {} differs from existing width {}",
                        p.vector.len(),
                        first.vector.len()
                    )));
                }
            }
            if p.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite prototype for domain {}",
                    p.domain_id
                )));
            }
            self.entries.push(p);
        }
        Ok(())
    }

    pub fn entries(&self) -> &[Prototype] {
        &self.entries
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> + Clone {
        self.entries.iter().map(|p| p.vector.as_slice())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub gamma1: f64,
    pub gamma2: f64,
    pub epsilon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            gamma1: 1.0,
            gamma2: 0.1,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub intra: f64,
    pub inter: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct LossReport {
    pub intra: f64,
    pub inter: f64,
    pub total: f64,
    pub grad_x: Matrix,
    pub grad_x_aug: Matrix,
}

impl LossReport {
    pub fn without_gradients(&self) -> LossValues {
        LossValues {
            intra: self.intra,
            inter: self.inter,
            total: self.total,
        }
    }
}

/// `γ₁·intra + γ₂·inter`. The repulsion term acts on the original view only.
pub fn total_loss(
    x: &Matrix,
    x_aug: &Matrix,
    labels: &[Option<usize>],
    prototypes: &PrototypeSet,
    w: &LossWeights,
) -> Result<LossReport> {
    let (intra, gi_x, gi_a) = intra_loss(x, x_aug, labels)?;
    let (inter, ge_x) = inter_loss(x, prototypes.vectors(), w.epsilon)?;
    let mut grad_x = gi_x.scale(w.gamma1);
    grad_x.add_scaled(&ge_x, w.gamma2);
    Ok(LossReport {
        intra,
        inter,
        total: w.gamma1 * intra + w.gamma2 * inter,
        grad_x,
        grad_x_aug: gi_a.scale(w.gamma1),
    })
}

/// Median distance from each point to its `k`-th nearest neighbour.
pub fn median_knn_distance(points: &Matrix, k: usize) -> f64 {
    let n = points.rows();
    if n < 2 {
        return 0.0;
    }
    let k = k.clamp(1, n - 1);
    let mut kth: Vec<f64> = (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| squared_distance(points.row(i), points.row(j)).sqrt())
                .collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect();
    kth.sort_by(f64::total_cmp);
    if n % 2 == 1 {
        kth[n / 2]
    } else {
        0.5 * (kth[n / 2 - 1] + kth[n / 2])
    }
}

/// Neighbourhood used for automatic `eps` selection.
pub const AUTO_EPS_NEIGHBOR: usize = 4;
pub const DEFAULT_MIN_PTS: usize = 4;

/// Smallest `eps` handed to clustering when the automatic choice collapses to zero.
const MIN_EPS: f64 = 1e-12;

/// Clusters a frozen domain's embeddings and returns one centroid per cluster.
///
/// `eps = None` picks the median 4-nearest-neighbour distance. When every
/// point is noise, falls back to one centroid per labeled class (or a single
/// centroid when nothing is labeled).
pub fn extract_prototypes(
    x: &Matrix,
    labels: &[Option<usize>],
    eps: Option<f64>,
    min_pts: usize,
    domain_id: usize,
) -> Result<Vec<Prototype>> {
    if x.rows() == 0 {
        return Ok(Vec::new());
    }
    let eps = eps.unwrap_or_else(|| median_knn_distance(x, AUTO_EPS_NEIGHBOR).max(MIN_EPS));
    let assignment = dbscan(x, eps, min_pts)?;
    let clusters = assignment.iter().copied().max().unwrap_or(NOISE);
    let groups: Vec<Vec<usize>> = if clusters >= 0 {
        (0..=clusters)
            .map(|c| (0..x.rows()).filter(|&i| assignment[i] == c).collect())
            .collect()
    } else {
        let classes = labels.iter().flatten().copied().max();
        match classes {
            Some(maxc) => (0..=maxc)
                .map(|c| (0..x.rows()).filter(|&i| labels[i] == Some(c)).collect::<Vec<_>>())
                .filter(|g| !g.is_empty())
                .collect(),
            None => vec![(0..x.rows()).collect()],
        }
    };
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(cluster_id, members)| Prototype {
            domain_id,
            cluster_id,
            vector: x.select_rows(&members).column_mean().expect("non-empty group"),
        })
        .collect())
}
