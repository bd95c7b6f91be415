use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::numerics::{squared_distance, Matrix};

pub const NOISE: i64 = -1;

fn region(points: &Matrix, p: usize, eps2: f64) -> Vec<usize> {
    let row = points.row(p);
    (0..points.rows())
        .filter(|&q| squared_distance(row, points.row(q)) <= eps2)
        .collect()
}

/// Density clustering under Euclidean distance.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within `eps`. Clusters are grown from unvisited core points in index
/// order; a border point joins the first cluster that reaches it. Returns a
/// label per point, [`NOISE`] for points in no cluster.
pub fn dbscan(points: &Matrix, eps: f64, min_pts: usize) -> Result<Vec<i64>> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Validation(format!("dbscan eps must be positive, got {eps}")));
    }
    if min_pts == 0 {
        return Err(Error::Validation("dbscan min_pts must be at least 1".into()));
    }
    let eps2 = eps * eps;
    let n = points.rows();
    let mut labels: Vec<Option<i64>> = vec![None; n];
    let mut cluster = 0i64;
    for p in 0..n {
        if labels[p].is_some() {
            continue;
        }
        let nbrs = region(points, p, eps2);
        if nbrs.len() < min_pts {
            labels[p] = Some(NOISE);
            continue;
        }
        labels[p] = Some(cluster);
        let mut queue: VecDeque<usize> = nbrs.into_iter().collect();
        while let Some(q) = queue.pop_front() {
            match labels[q] {
                Some(NOISE) => labels[q] = Some(cluster),
                None => {
                    labels[q] = Some(cluster);
                    let qn = region(points, q, eps2);
                    if qn.len() >= min_pts {
                        queue.extend(qn);
                    }
                }
                Some(_) => {}
            }
        }
        cluster += 1;
    }
    Ok(labels.into_iter().map(|l| l.unwrap_or(NOISE)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng;

    fn blobs(centers: &[[f64; 2]], per: usize, spread: f64, seed: u64) -> Matrix {
        let noise = rng::gaussian_matrix(centers.len() * per, 2, spread, &mut rng::stream(seed, "b"));
        Matrix::from_fn(centers.len() * per, 2, |i, j| centers[i / per][j] + noise[(i, j)])
    }

    #[test]
    fn two_separated_blobs() {
        let pts = blobs(&[[0.0, 0.0], [10.0, 0.0]], 20, 0.15, 1);
        let labels = dbscan(&pts, 1.0, 3).unwrap();
        assert!(labels[..20].iter().all(|&l| l == 0));
        assert!(labels[20..].iter().all(|&l| l == 1));
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let pts = Matrix::from_fn(6, 3, |_, j| j as f64);
        assert_eq!(dbscan(&pts, 0.1, 4).unwrap(), vec![0; 6]);
    }

    #[test]
    fn isolated_point_is_noise() {
        let mut pts = blobs(&[[0.0, 0.0], [10.0, 10.0]], 10, 0.1, 2);
        pts = pts.vcat(&Matrix::from_rows(&[[50.0, -50.0]]).unwrap());
        let labels = dbscan(&pts, 1.0, 3).unwrap();
        assert_eq!(*labels.last().unwrap(), NOISE);
        assert!(labels[..20].iter().all(|&l| l >= 0));
    }

    #[test]
    fn min_pts_one_makes_everything_core() {
        let pts = Matrix::from_rows(&[[0.0], [5.0], [10.0]]).unwrap();
        assert_eq!(dbscan(&pts, 1.0, 1).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn rejects_bad_parameters() {
        let pts = Matrix::zeros(2, 2);
        assert!(dbscan(&pts, 0.0, 2).is_err());
        assert!(dbscan(&pts, 1.0, 0).is_err());
    }
}
