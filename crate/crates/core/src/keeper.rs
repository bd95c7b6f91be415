//! Analytic ridge classifier that absorbs one domain at a time.
//!
//! The state keeps only the weights `W` and the regularized inverse Gram
//! matrix `M = (Σ XᵢᵀXᵢ + λI)⁻¹`; each update folds in a new domain through
//! the Woodbury identity, so the result equals a batch fit on every domain
//! seen so far without retaining any of their rows.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{argmax, ridge_solve_batch, softmax_rows, Cholesky, Matrix};

/// Global classes contributed by one domain, in arrival order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassBlock {
    pub domain_id: usize,
    pub classes: Range<usize>,
}

impl ClassBlock {
    pub fn new(domain_id: usize, classes: Range<usize>) -> Self {
        ClassBlock { domain_id, classes }
    }

    pub fn width(&self) -> usize {
        self.classes.len()
    }

    fn overlaps(&self, other: &ClassBlock) -> bool {
        self.classes.start < other.classes.end && other.classes.start < self.classes.end
    }
}

/// Which inverse the recursive step computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdatePath {
    /// Smaller of the two below.
    #[default]
    Auto,
    /// Invert the `nᵢ×nᵢ` capacitance matrix `I + XᵢMXᵢᵀ`.
    Capacitance,
    /// Invert the `h×h` matrix `M⁻¹ + XᵢᵀXᵢ`.
    Gram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeState {
    w: Matrix,
    m: Matrix,
    lambda: f64,
    blocks: Vec<ClassBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Matrix,
    /// Global class index per row.
    pub classes: Vec<usize>,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Validation(format!(
            "ridge lambda must be positive, got {lambda}"
        )));
    }
    Ok(())
}

fn check_one_hot(y: &Matrix, block: &ClassBlock) -> Result<()> {
    if y.cols() != block.width() {
        return Err(Error::Validation(format!(
            "targets have {} columns but block {:?} has {} classes",
            y.cols(),
            block.classes,
            block.width()
        )));
    }
    for i in 0..y.rows() {
        let row = y.row(i);
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != row.len() {
            return Err(Error::Validation(format!("target row {i} is not one-hot")));
        }
    }
    Ok(())
}

fn check_design(x: &Matrix, y: &Matrix) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::Validation("ridge step needs at least one row".into()));
    }
    if x.rows() != y.rows() {
        return Err(Error::Validation(format!(
            "design has {} rows but targets have {}",
            x.rows(),
            y.rows()
        )));
    }
    x.ensure_finite("design matrix")
}

/// One-hot rows for `labels`, each in `0..width`.
pub fn one_hot(labels: &[usize], width: usize) -> Result<Matrix> {
    let mut y = Matrix::zeros(labels.len(), width);
    for (i, &l) in labels.iter().enumerate() {
        if l >= width {
            return Err(Error::Bounds(format!("label {l} outside 0..{width}")));
        }
        y[(i, l)] = 1.0;
    }
    Ok(y)
}

impl RidgeState {
    /// Batch fit on the first domain.
    pub fn init(x: &Matrix, y: &Matrix, lambda: f64, block: ClassBlock) -> Result<Self> {
        check_lambda(lambda)?;
        check_design(x, y)?;
        check_one_hot(y, &block)?;
        let mut gram = x.t_matmul(x);
        for i in 0..gram.rows() {
            gram[(i, i)] += lambda;
        }
        let m = Cholesky::factor(&gram)?.inverse();
        let w = m.matmul(&x.t_matmul(y));
        Ok(RidgeState {
            w,
            m,
            lambda,
            blocks: vec![block],
        })
    }

    /// Reassembles a state from persisted parts.
    pub fn from_parts(w: Matrix, m: Matrix, lambda: f64, blocks: Vec<ClassBlock>) -> Result<Self> {
        check_lambda(lambda)?;
        let h = m.rows();
        if m.cols() != h || w.rows() != h {
            return Err(Error::Validation(format!(
                "inconsistent ridge shapes: W {:?}, M {:?}",
                w.shape(),
                m.shape()
            )));
        }
        let width: usize = blocks.iter().map(ClassBlock::width).sum();
        if width != w.cols() {
            return Err(Error::Validation(format!(
                "W has {} columns but blocks cover {width} classes",
                w.cols()
            )));
        }
        for (i, a) in blocks.iter().enumerate() {
            if blocks[i + 1..].iter().any(|b| a.overlaps(b)) {
                return Err(Error::Validation(format!("class block {:?} overlaps another", a.classes)));
            }
        }
        w.ensure_finite("ridge weights")?;
        m.ensure_finite("inverse Gram matrix")?;
        Ok(RidgeState { w, m, lambda, blocks })
    }

    pub fn update(&mut self, x: &Matrix, y: &Matrix, block: ClassBlock) -> Result<()> {
        self.update_with(x, y, block, UpdatePath::Auto)
    }

    /// Absorbs a new domain using only its own rows.
    pub fn update_with(
        &mut self,
        x: &Matrix,
        y: &Matrix,
        block: ClassBlock,
        path: UpdatePath,
    ) -> Result<()> {
        check_design(x, y)?;
        check_one_hot(y, &block)?;
        let h = self.dim();
        if x.cols() != h {
            return Err(Error::Validation(format!(
                "embeddings have width {} but the classifier expects {h}",
                x.cols()
            )));
        }
        if let Some(b) = self.blocks.iter().find(|b| b.overlaps(&block)) {
            return Err(Error::Validation(format!(
                "class block {:?} of domain {} overlaps {:?} of domain {}",
                block.classes, block.domain_id, b.classes, b.domain_id
            )));
        }
        let path = match path {
            UpdatePath::Auto if x.rows() <= h => UpdatePath::Capacitance,
            UpdatePath::Auto => UpdatePath::Gram,
            p => p,
        };
        let mut m = match path {
            UpdatePath::Capacitance => {
                let mxt = self.m.matmul_t(x);
                let mut cap = x.matmul(&mxt);
                cap.symmetrize();
                for i in 0..cap.rows() {
                    cap[(i, i)] += 1.0;
                }
                let correction = mxt.matmul(&Cholesky::factor(&cap)?.solve(&mxt.transpose())?);
                self.m.sub(&correction)
            }
            _ => {
                let mut precision = Cholesky::factor(&self.m)?.inverse();
                precision.add_scaled(&x.t_matmul(x), 1.0);
                precision.symmetrize();
                Cholesky::factor(&precision)?.inverse()
            }
        };
        m.symmetrize();
        m.ensure_finite("updated inverse Gram matrix")?;

        let xtx = x.t_matmul(x);
        let old = self.w.sub(&m.matmul(&xtx.matmul(&self.w)));
        let new = m.matmul(&x.t_matmul(y));
        self.w = old.hcat(&new);
        self.m = m;
        self.blocks.push(block);
        Ok(())
    }

    pub fn predict(&self, x: &Matrix) -> Result<Prediction> {
        if x.cols() != self.dim() {
            return Err(Error::Validation(format!(
                "embeddings have width {} but the classifier expects {}",
                x.cols(),
                self.dim()
            )));
        }
        let logits = x.matmul(&self.w);
        let probabilities = softmax_rows(&logits)?;
        let columns = self.column_classes();
        let classes = (0..logits.rows())
            .map(|i| columns[argmax(logits.row(i)).expect("at least one class")])
            .collect();
        Ok(Prediction {
            probabilities,
            classes,
        })
    }

    /// Global class of each column of `W`.
    pub fn column_classes(&self) -> Vec<usize> {
        self.blocks.iter().flat_map(|b| b.classes.clone()).collect()
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn m(&self) -> &Matrix {
        &self.m
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn blocks(&self) -> &[ClassBlock] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.m.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.w.cols()
    }
}

/// Batch ridge fit on all domains stacked, targets zero-padded so that the
/// columns of domain `i` follow those of domains `< i`. Reference for the
/// recursive state.
pub fn batch_oracle(parts: &[(Matrix, Matrix)], lambda: f64) -> Result<Matrix> {
    let Some((first, _)) = parts.first() else {
        return Err(Error::Validation("batch fit needs at least one domain".into()));
    };
    let width: usize = parts.iter().map(|(_, y)| y.cols()).sum();
    let mut xs = Matrix::zeros(0, first.cols());
    let mut ys = Matrix::zeros(0, width);
    let mut offset = 0;
    for (x, y) in parts {
        if x.cols() != first.cols() || x.rows() != y.rows() {
            return Err(Error::Validation("domain blocks have inconsistent shapes".into()));
        }
        xs = xs.vcat(x);
        let padded = Matrix::from_fn(y.rows(), width, |i, j| {
            if (offset..offset + y.cols()).contains(&j) {
                y[(i, j - offset)]
            } else {
                0.0
            }
        });
        ys = ys.vcat(&padded);
        offset += y.cols();
    }
    ridge_solve_batch(&xs, &ys, lambda)
}
