//! Domain identification for test graphs of unknown origin.
//!
//! Node features pass through a random, never-trained two-layer graph
//! convolution into a wide space; a graph is summarized by the mean of its
//! projected rows and matched to the nearest stored domain summary.

use crate::error::{Error, Result};
use crate::graph::{Graph, Propagation};
use crate::numerics::{rng, squared_distance, Matrix};

pub const DEFAULT_PROJECTION_DIM: usize = 2048;

/// Frozen random weights, fully determined by `(seed, input_dim, dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParams {
    seed: u64,
    r1: Matrix,
    r2: Matrix,
}

impl ProjectionParams {
    /// Gaussian weights with variance `2 / fan_in`.
    pub fn new(input_dim: usize, dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || dim == 0 {
            return Err(Error::Validation(format!(
                "projection needs positive dimensions, got {input_dim} -> {dim}"
            )));
        }
        let mut r = rng::stream(seed, "projection/weights");
        let r1 = rng::gaussian_matrix(input_dim, dim, (2.0 / input_dim as f64).sqrt(), &mut r);
        let r2 = rng::gaussian_matrix(dim, dim, (2.0 / dim as f64).sqrt(), &mut r);
        Ok(ProjectionParams { seed, r1, r2 })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.r1.rows()
    }

    pub fn dim(&self) -> usize {
        self.r2.cols()
    }

    fn check(&self, prop: &Propagation, features: &Matrix) -> Result<()> {
        if features.cols() != self.input_dim() {
            return Err(Error::Validation(format!(
                "projection expects {} input features, got {}",
                self.input_dim(),
                features.cols()
            )));
        }
        if features.rows() != prop.num_nodes() {
            return Err(Error::Validation(format!(
                "{} feature rows for a {}-node graph",
                features.rows(),
                prop.num_nodes()
            )));
        }
        Ok(())
    }

    /// `Â · relu(Â·F·R¹)`, the part of the projection before the last weight.
    fn hidden(&self, prop: &Propagation, features: &Matrix) -> Matrix {
        let first = prop.apply(features).matmul(&self.r1).map(|v| v.max(0.0));
        prop.apply(&first)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainPrototype {
    pub domain_id: usize,
    pub vector: Vec<f64>,
}

/// `F̂ = Â · relu(Â·F·R¹) · R²` for already aligned features.
pub fn project(prop: &Propagation, features: &Matrix, params: &ProjectionParams) -> Result<Matrix> {
    params.check(prop, features)?;
    Ok(params.hidden(prop, features).matmul(&params.r2))
}

pub fn random_projection(g: &Graph, params: &ProjectionParams) -> Result<Matrix> {
    project(&Propagation::new(g), g.features(), params)
}

/// Average pooling over nodes.
pub fn domain_prototype(projected: &Matrix) -> Result<Vec<f64>> {
    projected
        .column_mean()
        .ok_or_else(|| Error::Validation("cannot pool an empty graph".into()))
}

/// Same value as pooling [`project`], up to rounding: the mean is taken
/// before the last (linear) weight, which avoids forming the `n×p` product.
pub fn pooled_projection(
    prop: &Propagation,
    features: &Matrix,
    params: &ProjectionParams,
) -> Result<Vec<f64>> {
    params.check(prop, features)?;
    let mean = domain_prototype(&params.hidden(prop, features))?;
    let row = Matrix::from_vec(1, mean.len(), mean)?;
    Ok(row.matmul(&params.r2).into_vec())
}

/// Euclidean distance from `test` to every prototype, in list order.
pub fn prototype_distances(test: &[f64], prototypes: &[DomainPrototype]) -> Result<Vec<f64>> {
    prototypes
        .iter()
        .map(|p| {
            if p.vector.len() != test.len() {
                return Err(Error::Validation(format!(
                    "prototype of domain {} has width {}, test summary {}",
                    p.domain_id,
                    p.vector.len(),
                    test.len()
                )));
            }
            Ok(squared_distance(test, &p.vector).sqrt())
        })
        .collect()
}

/// Nearest prototype, i.e. the maximizer of `exp(−‖D_test − D_k‖²)`.
/// Ties go to the lowest domain id.
pub fn discriminate(test: &[f64], prototypes: &[DomainPrototype]) -> Result<usize> {
    let dist = prototype_distances(test, prototypes)?;
    let mut best: Option<(f64, usize)> = None;
    for (p, d) in prototypes.iter().zip(dist) {
        let better = match best {
            None => true,
            Some((bd, bid)) => d < bd || (d == bd && p.domain_id < bid),
        };
        if better {
            best = Some((d, p.domain_id));
        }
    }
    best.map(|(_, id)| id)
        .ok_or_else(|| Error::Validation("no domain prototypes to match against".into()))
}
