//! Helpers shared by the integration test targets. Every oracle here is
//! written independently of the library code it checks.

#![allow(dead_code)]

use gdil_core::graph::{Graph, Split};
use gdil_core::numerics::{rng, Matrix};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

/// Central finite-difference gradient of `f` at `x`.
pub fn fd_gradient(x: &Matrix, mut f: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut g = Matrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for k in 0..x.as_slice().len() {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + FD_STEP;
        let plus = f(&probe);
        probe.as_mut_slice()[k] = orig - FD_STEP;
        let minus = f(&probe);
        probe.as_mut_slice()[k] = orig;
        g.as_mut_slice()[k] = (plus - minus) / (2.0 * FD_STEP);
    }
    g
}

/// Largest entrywise relative error. Entries whose magnitudes are both below
/// `floor` are compared against `floor` instead, so that exact zeros do not
/// divide by zero.
pub fn max_relative_error(analytic: &Matrix, numeric: &Matrix, floor: f64) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// A connected graph on `n ≤ 10` nodes: a ring plus a few chords, Gaussian
/// features, labels cycling through `classes`, every node in the train split.
pub fn small_graph(n: usize, dim: usize, classes: usize, seed: u64) -> Graph {
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).filter(|(a, b)| a != b).collect();
    edges.extend((0..n / 2).map(|i| (i, i + n / 2)).filter(|(a, b)| a != b));
    let features = rng::gaussian_matrix(n, dim, 1.0, &mut rng::stream(seed, "test/features"));
    Graph::new(
        "small",
        features,
        edges,
        (0..n).map(|i| Some(i % classes)).collect(),
        vec![Split::Train; n],
        classes,
    )
    .expect("valid graph")
}

/// Reference density clustering: core points are connected when within `eps`;
/// clusters are the connected components of that core graph, numbered by
/// their smallest core index. A border point joins the lowest-numbered
/// cluster among its neighbouring cores.
pub fn brute_dbscan(points: &Matrix, eps: f64, min_pts: usize) -> Vec<i64> {
    let n = points.rows();
    let close = |a: usize, b: usize| {
        let d2: f64 = points.row(a).iter().zip(points.row(b)).map(|(x, y)| (x - y) * (x - y)).sum();
        d2 <= eps * eps
    };
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| close(i, j)).count() >= min_pts).collect();

    // Union-find over cores, rooted at the smallest index.
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if core[i] && core[j] && close(i, j) {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut roots: Vec<usize> = (0..n).filter(|&i| core[i]).map(|i| root(&mut parent, i)).collect();
    roots.sort_unstable();
    roots.dedup();
    let id_of = |r: usize| roots.binary_search(&r).expect("known root") as i64;

    (0..n)
        .map(|i| {
            if core[i] {
                id_of(root(&mut parent, i))
            } else {
                (0..n)
                    .filter(|&j| core[j] && close(i, j))
                    .map(|j| id_of(root(&mut parent, j)))
                    .min()
                    .unwrap_or(-1)
            }
        })
        .collect()
}

/// Solves `A·X = B` by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_solve(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.rows();
    assert_eq!(a.cols(), n);
    let m = b.cols();
    let mut aug: Vec<Vec<f64>> = (0..n)
        .map(|i| a.row(i).iter().chain(b.row(i)).copied().collect())
        .collect();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| aug[i][c].abs().total_cmp(&aug[j][c].abs()))
            .unwrap();
        aug.swap(c, p);
        let piv = aug[c][c];
        assert!(piv.abs() > 1e-300, "singular system");
        for v in aug[c].iter_mut() {
            *v /= piv;
        }
        let pivot_row = aug[c].clone();
        for (r, row) in aug.iter_mut().enumerate() {
            if r != c && row[c] != 0.0 {
                let f = row[c];
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
    }
    Matrix::from_fn(n, m, |i, j| aug[i][n + j])
}

/// Ridge weights of the stacked problem, with each part's targets placed in
/// its own block of columns.
pub fn stacked_ridge(parts: &[(Matrix, Matrix)], lambda: f64) -> Matrix {
    let h = parts[0].0.cols();
    let total: usize = parts.iter().map(|(_, y)| y.cols()).sum();
    let mut gram = Matrix::identity(h).scale(lambda);
    let mut rhs = Matrix::zeros(h, total);
    let mut offset = 0;
    for (x, y) in parts {
        for i in 0..h {
            for j in 0..h {
                gram[(i, j)] += (0..x.rows()).map(|r| x[(r, i)] * x[(r, j)]).sum::<f64>();
            }
            for c in 0..y.cols() {
                rhs[(i, offset + c)] += (0..x.rows()).map(|r| x[(r, i)] * y[(r, c)]).sum::<f64>();
            }
        }
        offset += y.cols();
    }
    gauss_jordan_solve(&gram, &rhs)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in m.iter_mut() {
                    let (mkp, mkq) = (row[p], row[q]);
                    row[p] = c * mkp - s * mkq;
                    row[q] = s * mkp + c * mkq;
                }
                let (head, tail) = m.split_at_mut(q);
                for (a, b) in head[p].iter_mut().zip(tail[0].iter_mut()) {
                    let (mpk, mqk) = (*a, *b);
                    *a = c * mpk - s * mqk;
                    *b = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}
