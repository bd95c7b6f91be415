use super::Matrix;
use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(a: &Matrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Validation(format!(
                "expected a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        a.ensure_finite("matrix to factor")?;
        let tol = 1e-10 * a.max_abs().max(1.0);
        if a.asymmetry() > tol {
            return Err(Error::Validation(format!(
                "matrix is not symmetric (asymmetry {:.3e})",
                a.asymmetry()
            )));
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::Numerical(format!(
                    "matrix is not positive definite (pivot {j} = {diag:.3e})"
                )));
            }
            let d = diag.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Cholesky { l })
    }

    /// Solves `A·Z = B` by forward then backward substitution.
    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.l.rows();
        if b.rows() != n {
            return Err(Error::Validation(format!(
                "right-hand side has {} rows, system has {n}",
                b.rows()
            )));
        }
        let c = b.cols();
        let mut z = b.clone();
        for i in 0..n {
            for k in 0..i {
                let lik = self.l[(i, k)];
                if lik != 0.0 {
                    for j in 0..c {
                        let v = z[(k, j)];
                        z[(i, j)] -= lik * v;
                    }
                }
            }
            let d = self.l[(i, i)];
            z.row_mut(i).iter_mut().for_each(|v| *v /= d);
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let lki = self.l[(k, i)];
                if lki != 0.0 {
                    for j in 0..c {
                        let v = z[(k, j)];
                        z[(i, j)] -= lki * v;
                    }
                }
            }
            let d = self.l[(i, i)];
            z.row_mut(i).iter_mut().for_each(|v| *v /= d);
        }
        Ok(z)
    }

    /// `A⁻¹`, computed column by column from the factor.
    pub fn inverse(&self) -> Matrix {
        let n = self.l.rows();
        let mut inv = self
            .solve(&Matrix::identity(n))
            .expect("identity has matching rows");
        inv.symmetrize();
        inv
    }
}

/// Solves `A·Z = B` for symmetric positive definite `A`.
pub fn spd_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    b.ensure_finite("right-hand side")?;
    Cholesky::factor(a)?.solve(b)
}

/// `(XᵀX + λI)⁻¹ XᵀY`.
pub fn ridge_solve_batch(x: &Matrix, y: &Matrix, lambda: f64) -> Result<Matrix> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Validation(format!(
            "ridge lambda must be positive, got {lambda}"
        )));
    }
    if x.rows() == 0 {
        return Err(Error::Validation("ridge regression needs at least one row".into()));
    }
    if x.rows() != y.rows() {
        return Err(Error::Validation(format!(
            "design has {} rows but targets have {}",
            x.rows(),
            y.rows()
        )));
    }
    x.ensure_finite("design matrix")?;
    y.ensure_finite("target matrix")?;
    let mut gram = x.t_matmul(x);
    for i in 0..gram.rows() {
        gram[(i, i)] += lambda;
    }
    spd_solve(&gram, &x.t_matmul(y))
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(m: &Matrix) -> Result<Matrix> {
    m.ensure_finite("softmax input")?;
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(out)
}

/// Index of the largest entry, lowest index on ties. `None` for an empty slice.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng;
    use proptest::prelude::*;

    fn explicit_inverse(a: &Matrix) -> Matrix {
        // Gauss-Jordan with partial pivoting; test oracle only.
        let n = a.rows();
        let mut aug = a.hcat(&Matrix::identity(n));
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| aug[(i, col)].abs().total_cmp(&aug[(j, col)].abs()))
                .unwrap();
            if pivot != col {
                for j in 0..2 * n {
                    let t = aug[(col, j)];
                    aug[(col, j)] = aug[(pivot, j)];
                    aug[(pivot, j)] = t;
                }
            }
            let p = aug[(col, col)];
            for j in 0..2 * n {
                aug[(col, j)] /= p;
            }
            for i in 0..n {
                if i != col {
                    let f = aug[(i, col)];
                    for j in 0..2 * n {
                        aug[(i, j)] -= f * aug[(col, j)];
                    }
                }
            }
        }
        Matrix::from_fn(n, n, |i, j| aug[(i, n + j)])
    }

    fn random_spd(n: usize, seed: u64) -> Matrix {
        let g = rng::gaussian_matrix(n, n, 1.0, &mut rng::stream(seed, "spd"));
        let mut a = g.t_matmul(&g);
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
        a
    }

    #[test]
    fn identity_system_returns_rhs() {
        let b = Matrix::from_fn(3, 2, |i, j| (i as f64) * 1.5 - j as f64);
        assert_eq!(spd_solve(&Matrix::identity(3), &b).unwrap(), b);
    }

    #[test]
    fn scalar_system() {
        let a = Matrix::identity(4).scale(2.0);
        let z = spd_solve(&a, &Matrix::identity(4)).unwrap();
        assert!(z.max_abs_diff(&Matrix::identity(4).scale(0.5)) < 1e-15);
    }

    #[test]
    fn random_spd_matches_explicit_inverse() {
        let a = random_spd(10, 7);
        let b = rng::gaussian_matrix(10, 3, 1.0, &mut rng::stream(8, "rhs"));
        let z = spd_solve(&a, &b).unwrap();
        let oracle = explicit_inverse(&a).matmul(&b);
        assert!(z.max_abs_diff(&oracle) < 1e-8);
        let resid = a.matmul(&z).sub(&b).frobenius_norm();
        assert!(resid <= 1e-8 * b.frobenius_norm());
    }

    #[test]
    fn non_spd_is_numerical_error() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        let err = spd_solve(&a, &Matrix::identity(2)).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)), "{err}");
        let asym = Matrix::from_rows(&[[1.0, 0.5], [0.0, 1.0]]).unwrap();
        assert!(matches!(
            spd_solve(&asym, &Matrix::identity(2)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn ridge_identity_design() {
        let w = ridge_solve_batch(&Matrix::identity(2), &Matrix::identity(2), 1.0).unwrap();
        assert!(w.max_abs_diff(&Matrix::identity(2).scale(0.5)) < 1e-15);
    }

    #[test]
    fn ridge_hand_inverted_example() {
        // (XᵀX + I) = [[3,1],[1,3]], inverse = [[3,-1],[-1,3]]/8, XᵀY = [[1,0,1],[0,1,1]].
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let y = Matrix::identity(3);
        let w = ridge_solve_batch(&x, &y, 1.0).unwrap();
        let expected =
            Matrix::from_rows(&[[0.375, -0.125, 0.25], [-0.125, 0.375, 0.25]]).unwrap();
        assert!(w.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn ridge_regularization_dominance() {
        let mut r = rng::stream(3, "x");
        let x = rng::gaussian_matrix(12, 5, 1.0, &mut r);
        let y = rng::gaussian_matrix(12, 3, 1.0, &mut r);
        let w = ridge_solve_batch(&x, &y, 1e12).unwrap();
        assert!(w.frobenius_norm() <= 1e-9 * x.t_matmul(&y).frobenius_norm());
    }

    #[test]
    fn ridge_rejects_nonpositive_lambda() {
        let x = Matrix::identity(2);
        assert!(matches!(
            ridge_solve_batch(&x, &x, 0.0),
            Err(Error::Validation(_))
        ));
        assert!(ridge_solve_batch(&x, &x, -1.0).is_err());
    }

    #[test]
    fn softmax_examples() {
        let m = Matrix::from_rows(&[
            [0.0, 0.0, 0.0],
            [1f64.ln(), 2f64.ln(), 3f64.ln()],
        ])
        .unwrap();
        let s = softmax_rows(&m).unwrap();
        for v in s.row(0) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        for (v, e) in s.row(1).iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((v - e).abs() < 1e-15);
        }
        let shifted = softmax_rows(&m.map(|v| v + 123.0)).unwrap();
        assert!(shifted.max_abs_diff(&s) < 1e-15);
        assert!(softmax_rows(&Matrix::from_rows(&[[f64::NAN]]).unwrap()).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    proptest! {
        #[test]
        fn softmax_rows_stochastic_and_order_preserving(
            row in prop::collection::vec(-50.0f64..50.0, 1..12)
        ) {
            let m = Matrix::from_rows(std::slice::from_ref(&row)).unwrap();
            let s = softmax_rows(&m).unwrap();
            let sum: f64 = s.row(0).iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(s.row(0).iter().all(|&v| v >= 0.0));
            prop_assert_eq!(argmax(s.row(0)), argmax(&row));
        }

        #[test]
        fn spd_solve_recovers_solution(seed in 0u64..500, n in 1usize..9) {
            let a = random_spd(n, seed);
            let z = rng::gaussian_matrix(n, 2, 1.0, &mut rng::stream(seed, "z"));
            let back = spd_solve(&a, &a.matmul(&z)).unwrap();
            prop_assert!(back.sub(&z).frobenius_norm() <= 1e-8 * z.frobenius_norm().max(1e-300));
        }

        #[test]
        fn ridge_satisfies_normal_equations(
            seed in 0u64..500,
            n in 1usize..20,
            d in 1usize..7,
            lambda in 0.01f64..10.0,
        ) {
            let mut r = rng::stream(seed, "ridge");
            let x = rng::gaussian_matrix(n, d, 1.0, &mut r);
            let y = rng::gaussian_matrix(n, 3, 1.0, &mut r);
            let w = ridge_solve_batch(&x, &y, lambda).unwrap();
            let mut g = x.t_matmul(&x);
            for i in 0..d { g[(i, i)] += lambda; }
            let lhs = g.matmul(&w);
            prop_assert!(lhs.max_abs_diff(&x.t_matmul(&y)) <= 1e-8);
        }
    }
}
