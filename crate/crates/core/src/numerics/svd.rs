use super::matrix::dot;
use super::Matrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Leading singular triplets of a matrix: `M ≈ U·diag(S)·Vᵀ`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `n x k`, orthonormal columns.
    pub u: Matrix,
    /// Nonincreasing, nonnegative.
    pub s: Vec<f64>,
    /// `d x k`, orthonormal columns; each column's largest-magnitude entry is nonnegative.
    pub v: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (x, s) in us.row_mut(i).iter_mut().zip(&self.s) {
                *x *= s;
            }
        }
        us.matmul_t(&self.v)
    }
}

/// Top-`k` singular value decomposition via one-sided Jacobi rotations.
pub fn truncated_svd(m: &Matrix, k: usize) -> Result<SvdResult> {
    let (n, d) = m.shape();
    if k == 0 || k > n.min(d) {
        return Err(Error::Bounds(format!(
            "rank {k} outside [1, {}] for a {n}x{d} matrix",
            n.min(d)
        )));
    }
    m.ensure_finite("svd input")?;

    // Factor the orientation with at least as many rows as columns.
    let (left, s, right) = if n >= d {
        let (u, s, v) = jacobi(columns_of(m));
        (u, s, v)
    } else {
        let (u, s, v) = jacobi(rows_of(m));
        (v, s, u)
    };

    let mut u_cols: Vec<Vec<f64>> = left.into_iter().take(k).collect();
    let mut v_cols: Vec<Vec<f64>> = right.into_iter().take(k).collect();
    let s: Vec<f64> = s.into_iter().take(k).collect();

    for (u, v) in u_cols.iter_mut().zip(v_cols.iter_mut()) {
        let mut pivot = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
            u.iter_mut().for_each(|x| *x = -*x);
        }
    }

    Ok(SvdResult {
        u: Matrix::from_fn(n, k, |i, j| u_cols[j][i]),
        s,
        v: Matrix::from_fn(d, k, |i, j| v_cols[j][i]),
    })
}

fn columns_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.cols()).map(|j| m.column(j)).collect()
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// Orthogonalizes the given columns (each of length `len >= count`).
/// Returns left vectors, singular values and right vectors, sorted by
/// decreasing singular value.
fn jacobi(mut a: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
    let cols = a.len();
    let len = a.first().map_or(0, Vec::len);
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|j| {
            let mut e = vec![0.0; cols];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let sigma: Vec<f64> = a.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));

    let smax = order.first().map_or(0.0, |&i| sigma[i]);
    let negligible = smax * (len.max(cols) as f64) * f64::EPSILON;
    let mut left: Vec<Vec<f64>> = Vec::with_capacity(cols);
    let mut right = Vec::with_capacity(cols);
    let mut values = Vec::with_capacity(cols);
    for &i in &order {
        let s = sigma[i];
        let u = if s > negligible && s > 0.0 {
            a[i].iter().map(|x| x / s).collect()
        } else {
            complete_basis(&left, len)
        };
        left.push(u);
        right.push(v[i].clone());
        values.push(s);
    }
    (left, values, right)
}

fn rotate(vecs: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = vecs.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// A unit vector orthogonal to all of `basis`, drawn from the standard basis.
fn complete_basis(basis: &[Vec<f64>], len: usize) -> Vec<f64> {
    for e in 0..len {
        let mut cand = vec![0.0; len];
        cand[e] = 1.0;
        for _ in 0..2 {
            for b in basis {
                let proj = dot(&cand, b);
                cand.iter_mut().zip(b).for_each(|(c, bi)| *c -= proj * bi);
            }
        }
        let norm = dot(&cand, &cand).sqrt();
        if norm > 0.5 {
            cand.iter_mut().for_each(|c| *c /= norm);
            return cand;
        }
    }
    unreachable!("fewer basis vectors than dimensions")
}
