use crate::error::{Error, Result};
use crate::numerics::{truncated_svd, Matrix};

/// Map from a domain's raw feature space to the shared width.
///
/// Fitted once per domain on that domain's full feature matrix; the same map
/// is reused for every later pass over graphs attributed to the domain.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureAlignment {
    /// `F ↦ F·V` with `V` the leading right-singular vectors (`d₀ x d̄`).
    /// Columns beyond the available rank are zero.
    Project { basis: Matrix },
    /// `F ↦ [F ‖ 0]` for inputs narrower than the target.
    Pad { input_dim: usize, output_dim: usize },
}

impl FeatureAlignment {
    pub fn fit(features: &Matrix, target_dim: usize) -> Result<Self> {
        let (n, d0) = features.shape();
        if n == 0 {
            return Err(Error::Validation("cannot align an empty feature matrix".into()));
        }
        if target_dim == 0 {
            return Err(Error::Validation("target dimension must be at least 1".into()));
        }
        if d0 < target_dim {
            return Ok(FeatureAlignment::Pad {
                input_dim: d0,
                output_dim: target_dim,
            });
        }
        let k = target_dim.min(n);
        let svd = truncated_svd(features, k)?;
        Ok(FeatureAlignment::Project {
            basis: svd.v.pad_columns(target_dim),
        })
    }

    pub fn input_dim(&self) -> usize {
        match self {
            FeatureAlignment::Project { basis } => basis.rows(),
            FeatureAlignment::Pad { input_dim, .. } => *input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            FeatureAlignment::Project { basis } => basis.cols(),
            FeatureAlignment::Pad { output_dim, .. } => *output_dim,
        }
    }

    pub fn apply(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.input_dim() {
            return Err(Error::Validation(format!(
                "features have width {}, alignment expects {}",
                features.cols(),
                self.input_dim()
            )));
        }
        Ok(match self {
            FeatureAlignment::Project { basis } => features.matmul(basis),
            FeatureAlignment::Pad { output_dim, .. } => features.pad_columns(*output_dim),
        })
    }
}

/// Aligns a feature matrix to `target_dim` columns: projection onto the
/// top right-singular vectors when wide enough, zero padding otherwise.
pub fn align_features(features: &Matrix, target_dim: usize) -> Result<Matrix> {
    FeatureAlignment::fit(features, target_dim)?.apply(features)
}
