use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix};

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn unit_rows(x: &Matrix, rows: &[usize], what: &str) -> Result<(Matrix, Vec<f64>)> {
    let mut out = x.select_rows(rows);
    let mut norms = Vec::with_capacity(rows.len());
    for (k, &i) in rows.iter().enumerate() {
        let r = out.row_mut(k);
        let norm = dot(r, r).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numerical(format!(
                "{what} embedding of node {i} has norm {norm}; cosine similarity undefined"
            )));
        }
        r.iter_mut().for_each(|v| *v /= norm);
        norms.push(norm);
    }
    Ok((out, norms))
}

/// Supervised cross-view contrastive loss.
///
/// For every labeled node `j`, positives are the labeled nodes sharing its
/// class (itself included) in the augmented view, negatives the remaining
/// labeled nodes; similarity is cosine without temperature:
///
/// `L = −Σ_j log( Σ_{o∈pos(j)} e^{cos(x_j, a_o)} / Σ_{o} e^{cos(x_j, a_o)} )`
///
/// Unlabeled rows (`None`) are ignored and receive zero gradient.
/// Returns `(value, dL/dX, dL/dX_aug)`.
pub fn intra_loss(
    x: &Matrix,
    x_aug: &Matrix,
    labels: &[Option<usize>],
) -> Result<(f64, Matrix, Matrix)> {
    if x.shape() != x_aug.shape() || labels.len() != x.rows() {
        return Err(Error::Validation(format!(
            "views {:?} / {:?} and {} labels are not row-aligned",
            x.shape(),
            x_aug.shape(),
            labels.len()
        )));
    }
    let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_some()).collect();
    let mut grad_x = Matrix::zeros(x.rows(), x.cols());
    let mut grad_a = Matrix::zeros(x.rows(), x.cols());
    if idx.is_empty() {
        return Ok((0.0, grad_x, grad_a));
    }
    let cls: Vec<usize> = idx.iter().map(|&i| labels[i].unwrap()).collect();
    let (xn, x_norm) = unit_rows(x, &idx, "original-view")?;
    let (an, a_norm) = unit_rows(x_aug, &idx, "augmented-view")?;
    let sim = xn.matmul_t(&an);
    let m = idx.len();

    let mut value = 0.0;
    // dL/dS, overwritten row by row.
    let mut g = Matrix::zeros(m, m);
    for j in 0..m {
        let row = sim.row(j);
        let all = log_sum_exp(row.iter().copied());
        let pos = log_sum_exp((0..m).filter(|&o| cls[o] == cls[j]).map(|o| row[o]));
        value += all - pos;
        let grow = g.row_mut(j);
        for o in 0..m {
            let mut d = (row[o] - all).exp();
            if cls[o] == cls[j] {
                d -= (row[o] - pos).exp();
            }
            grow[o] = d;
        }
    }

    // Through cosine normalization: ∂cos/∂x = (â − cos·x̂)/‖x‖.
    let gx = g.matmul(&an);
    let ga = g.t_matmul(&xn);
    for k in 0..m {
        let mut wx = 0.0;
        let mut wa = 0.0;
        for o in 0..m {
            wx += g[(k, o)] * sim[(k, o)];
            wa += g[(o, k)] * sim[(o, k)];
        }
        let row = grad_x.row_mut(idx[k]);
        for ((r, &gv), &xv) in row.iter_mut().zip(gx.row(k)).zip(xn.row(k)) {
            *r = (gv - wx * xv) / x_norm[k];
        }
        let row = grad_a.row_mut(idx[k]);
        for ((r, &gv), &av) in row.iter_mut().zip(ga.row(k)).zip(an.row(k)) {
            *r = (gv - wa * av) / a_norm[k];
        }
    }
    Ok((value, grad_x, grad_a))
}

/// Prototype repulsion `(1/n) Σ_j Σ_k 1 / (‖x_j − p_k‖² + ε)` and its gradient.
pub fn inter_loss<'a, I>(x: &Matrix, prototypes: I, epsilon: f64) -> Result<(f64, Matrix)>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    if !(epsilon > 0.0) {
        return Err(Error::Validation(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    let n = x.rows();
    if n == 0 {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / n as f64;
    let mut value = 0.0;
    for p in prototypes {
        if p.len() != x.cols() {
            return Err(Error::Validation(format!(
                "prototype of width {} against embeddings of width {}",
                p.len(),
                x.cols()
            )));
        }
        for j in 0..n {
            let xj = x.row(j);
            let dist2: f64 = xj.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
            let denom = dist2 + epsilon;
            value += 1.0 / denom;
            let coef = -2.0 * scale / (denom * denom);
            let diff: Vec<f64> = xj.iter().zip(p).map(|(a, b)| a - b).collect();
            for (g, d) in grad.row_mut(j).iter_mut().zip(diff) {
                *g += coef * d;
            }
        }
    }
    Ok((value * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng;
    use proptest::prelude::*;

    fn fd_check(
        f: impl Fn(&Matrix) -> f64,
        x: &Matrix,
        analytic: &Matrix,
    ) {
        let h = 1e-5;
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                let mut p = x.clone();
                p[(i, j)] += h;
                let mut m = x.clone();
                m[(i, j)] -= h;
                let fd = (f(&p) - f(&m)) / (2.0 * h);
                let a = analytic[(i, j)];
                let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-6);
                assert!(rel <= 1e-4, "({i},{j}): fd {fd} vs analytic {a}");
            }
        }
    }

    #[test]
    fn single_class_is_zero() {
        let x = rng::gaussian_matrix(5, 3, 1.0, &mut rng::stream(1, "x"));
        let a = rng::gaussian_matrix(5, 3, 1.0, &mut rng::stream(2, "x"));
        let (v, gx, ga) = intra_loss(&x, &a, &[Some(2); 5]).unwrap();
        assert_eq!(v, 0.0);
        assert!(gx.max_abs() < 1e-15 && ga.max_abs() < 1e-15);
    }

    #[test]
    fn two_node_worked_value() {
        let x = Matrix::identity(2);
        let (v, _, _) = intra_loss(&x, &x, &[Some(0), Some(1)]).unwrap();
        let expected = 2.0 * (1.0 + (-1.0f64).exp()).ln();
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.6265).abs() < 1e-4);
    }

    #[test]
    fn intra_gradients_match_finite_differences() {
        let x = rng::gaussian_matrix(6, 4, 1.0, &mut rng::stream(3, "x"));
        let a = rng::gaussian_matrix(6, 4, 1.0, &mut rng::stream(4, "x"));
        let labels = [Some(0), Some(1), Some(0), None, Some(1), Some(1)];
        let (_, gx, ga) = intra_loss(&x, &a, &labels).unwrap();
        fd_check(|p| intra_loss(p, &a, &labels).unwrap().0, &x, &gx);
        fd_check(|p| intra_loss(&x, p, &labels).unwrap().0, &a, &ga);
        assert!(gx.row(3).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_norm_row_is_numerical_error() {
        let mut x = Matrix::identity(2);
        x[(1, 1)] = 0.0;
        let err = intra_loss(&x, &Matrix::identity(2), &[Some(0), Some(1)]).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
        // Unlabeled zero rows are ignored.
        assert!(intra_loss(&x, &Matrix::identity(2), &[Some(0), None]).is_ok());
    }

    #[test]
    fn inter_examples() {
        let x = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let none: [&[f64]; 0] = [];
        let (v, g) = inter_loss(&x, none, 1e-8).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g.max_abs(), 0.0);
        let p = [0.0, 0.0];
        let (v, _) = inter_loss(&x, [&p[..]], 1e-8).unwrap();
        assert_eq!(v, 1.0 / (1.0 + 1e-8));
        let far = x.scale(2.0);
        assert!(inter_loss(&far, [&p[..]], 1e-8).unwrap().0 < v);
        assert!(inter_loss(&x, [&p[..]], 0.0).is_err());
    }

    #[test]
    fn inter_gradient_matches_finite_differences() {
        let x = rng::gaussian_matrix(7, 3, 1.0, &mut rng::stream(5, "x"));
        let protos = rng::gaussian_matrix(3, 3, 2.0, &mut rng::stream(6, "p"));
        let rows = || (0..3).map(|k| protos.row(k));
        let (_, g) = inter_loss(&x, rows(), 0.1).unwrap();
        fd_check(|p| inter_loss(p, rows(), 0.1).unwrap().0, &x, &g);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn intra_nonnegative_and_scale_invariant(
            seed in 0u64..10_000, row in 0usize..6, c in 0.01f64..100.0
        ) {
            let x = rng::gaussian_matrix(6, 3, 1.0, &mut rng::stream(seed, "x"));
            let a = rng::gaussian_matrix(6, 3, 1.0, &mut rng::stream(seed, "a"));
            let labels = [Some(0), Some(1), Some(2), Some(0), Some(1), Some(2)];
            let (v, _, _) = intra_loss(&x, &a, &labels).unwrap();
            prop_assert!(v >= 0.0);
            let mut scaled = x.clone();
            scaled.row_mut(row).iter_mut().for_each(|e| *e *= c);
            let (w, _, _) = intra_loss(&scaled, &a, &labels).unwrap();
            prop_assert!((v - w).abs() <= 1e-10);
        }

        #[test]
        fn inter_permutation_invariant(seed in 0u64..10_000, shift in 1usize..5) {
            let x = rng::gaussian_matrix(5, 2, 1.0, &mut rng::stream(seed, "x"));
            let p = rng::gaussian_matrix(4, 2, 1.0, &mut rng::stream(seed, "p"));
            let (v, _) = inter_loss(&x, (0..4).map(|k| p.row(k)), 1e-3).unwrap();
            let xp: Vec<usize> = (0..5).map(|i| (i + shift) % 5).collect();
            let pp: Vec<usize> = (0..4).rev().collect();
            let (w, _) = inter_loss(&x.select_rows(&xp), pp.iter().map(|&k| p.row(k)), 1e-3).unwrap();
            prop_assert!((v - w).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }
}
