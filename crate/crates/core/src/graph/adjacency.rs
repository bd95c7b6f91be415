use super::Graph;
use crate::numerics::Matrix;

/// Sparse form of `D̂^{-1/2} (A + I) D̂^{-1/2}`, applied by [`Propagation::apply`].
///
/// The operator is symmetric, so it is its own adjoint in the reverse pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
}

impl Propagation {
    pub fn new(g: &Graph) -> Self {
        let n = g.num_nodes();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in g.edges() {
            adj[u].push(v);
            adj[v].push(u);
        }
        let deg_inv_sqrt: Vec<f64> = adj
            .iter()
            .map(|a| 1.0 / ((a.len() + 1) as f64).sqrt())
            .collect();

        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::with_capacity(2 * g.edges().len() + n);
        let mut weights = Vec::with_capacity(neighbors.capacity());
        offsets.push(0);
        for (i, nbrs) in adj.iter_mut().enumerate() {
            nbrs.push(i);
            nbrs.sort_unstable();
            for &j in nbrs.iter() {
                neighbors.push(j);
                weights.push(deg_inv_sqrt[i] * deg_inv_sqrt[j]);
            }
            offsets.push(neighbors.len());
        }
        Propagation {
            offsets,
            neighbors,
            weights,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// `Â · x`.
    pub fn apply(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.rows(), self.num_nodes(), "propagation row mismatch");
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..self.num_nodes() {
            let span = self.offsets[i]..self.offsets[i + 1];
            let orow = out.row_mut(i);
            for (&j, &w) in self.neighbors[span.clone()].iter().zip(&self.weights[span]) {
                for (o, &v) in orow.iter_mut().zip(x.row(j)) {
                    *o += w * v;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.num_nodes();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for k in self.offsets[i]..self.offsets[i + 1] {
                m[(i, self.neighbors[k])] = self.weights[k];
            }
        }
        m
    }
}

/// Dense symmetric-normalized adjacency with self-loops.
pub fn normalized_adjacency(g: &Graph) -> Matrix {
    Propagation::new(g).to_dense()
}
