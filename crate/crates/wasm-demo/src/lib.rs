//! Browser bindings for three small interactive views of `gdil-core`.
//! Every entry point returns a JSON string; failures come back as
//! `{"error": "..."}` so the page can show them inline.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use gdil_core::disentangle::{dbscan, median_knn_distance};
use gdil_core::domain_id::{domain_prototype, random_projection, ProjectionParams};
use gdil_core::graph::{synth_domain_suite, SynthSpec};
use gdil_core::harness::{run_sequence, RunConfig, RunOptions};
use gdil_core::numerics::{rng, squared_distance, Matrix};

fn to_json<T: Serialize>(r: gdil_core::Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).expect("plain data serializes"),
        Err(e) => serde_json::json!({ "error": e.to_string() }).to_string(),
    }
}

#[derive(Serialize)]
struct RunSummary {
    matrix: Vec<Vec<f64>>,
    average_accuracy: f64,
    average_forgetting: f64,
    discrimination_accuracy: f64,
}

fn small_run(domains: usize, epochs: usize, seed: u64) -> gdil_core::Result<RunSummary> {
    let config = RunConfig {
        synth_domains: domains,
        epochs,
        projection_dim: 256,
        seed,
        synth_seed: seed,
        ..RunConfig::default()
    };
    let tasks = config.load_tasks()?;
    let out = run_sequence(&config, &tasks, RunOptions::default())?;
    let r = out.report;
    Ok(RunSummary {
        matrix: r.accuracy_matrix.rows().to_vec(),
        average_accuracy: r.average_accuracy,
        average_forgetting: r.average_forgetting,
        discrimination_accuracy: r.discrimination_accuracy,
    })
}

/// Learns a small synthetic domain sequence and returns its accuracy matrix.
#[wasm_bindgen]
pub fn run_accuracy_matrix(domains: usize, epochs: usize, seed: u32) -> String {
    to_json(small_run(domains, epochs, u64::from(seed)))
}

#[derive(Serialize)]
struct ProjectionPoint {
    dim: usize,
    /// Distance between the pooled summaries of two different domains.
    across: f64,
    /// Distance between summaries of two graphs drawn from the same domain.
    within: f64,
}

fn projection_sweep(dims: &[usize], seed: u64) -> gdil_core::Result<Vec<ProjectionPoint>> {
    let spec = |s| SynthSpec {
        num_domains: 2,
        nodes_per_class: 30,
        feature_dim: 64,
        seed: s,
        ..SynthSpec::default()
    };
    let a = synth_domain_suite(&spec(seed))?;
    let b = synth_domain_suite(&spec(seed + 1))?;
    let graphs = [&a[0].graph, &a[1].graph, &b[0].graph];
    dims.iter()
        .map(|&dim| {
            let params = ProjectionParams::new(64, dim, seed)?;
            let summaries = graphs
                .iter()
                .map(|g| domain_prototype(&random_projection(g, &params)?))
                .collect::<gdil_core::Result<Vec<_>>>()?;
            Ok(ProjectionPoint {
                dim,
                across: squared_distance(&summaries[0], &summaries[1]).sqrt(),
                within: squared_distance(&summaries[0], &summaries[2]).sqrt(),
            })
        })
        .collect()
}

/// Domain-summary distances as the random projection widens. `dims` is a
/// comma-separated list such as `"16,64,256"`.
#[wasm_bindgen]
pub fn projection_distances(dims: &str, seed: u32) -> String {
    let parsed: Result<Vec<usize>, _> = dims.split(',').map(|d| d.trim().parse::<usize>()).collect();
    match parsed {
        Ok(d) => to_json(projection_sweep(&d, u64::from(seed))),
        Err(e) => serde_json::json!({ "error": format!("bad dimension list: {e}") }).to_string(),
    }
}

#[derive(Serialize)]
struct Clustering {
    points: Vec<[f64; 2]>,
    labels: Vec<i64>,
    clusters: usize,
    suggested_eps: f64,
}

fn blobs(seed: u64, n: usize) -> Matrix {
    let mut r = rng::stream(seed, "demo/blobs");
    let centers = rng::uniform_matrix(3, 2, 6.0, &mut r);
    let jitter = rng::gaussian_matrix(n, 2, 1.0, &mut r);
    let scatter = rng::uniform_matrix(n, 2, 9.0, &mut r);
    Matrix::from_fn(n, 2, |i, j| {
        if i % 10 == 9 {
            scatter[(i, j)]
        } else {
            centers[(i % 3, j)] + jitter[(i, j)]
        }
    })
}

fn cluster_blobs(seed: u64, n: usize, eps: f64, min_pts: usize) -> gdil_core::Result<Clustering> {
    let x = blobs(seed, n);
    let labels = dbscan(&x, eps, min_pts)?;
    Ok(Clustering {
        points: (0..n).map(|i| [x[(i, 0)], x[(i, 1)]]).collect(),
        clusters: labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize),
        labels,
        suggested_eps: median_knn_distance(&x, 4),
    })
}

/// Clusters a seeded 2-D point cloud; noise points carry label -1.
#[wasm_bindgen]
pub fn dbscan_2d(seed: u32, n: usize, eps: f64, min_pts: usize) -> String {
    to_json(cluster_blobs(u64::from(seed), n, eps, min_pts))
}
