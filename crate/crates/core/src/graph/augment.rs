use rand::Rng;

use super::Graph;
use crate::error::{Error, Result};
use crate::numerics::rng;

/// Random feature masking and edge dropping.
///
/// Every feature entry is zeroed with probability `mask_rate`, every edge
/// removed with probability `drop_rate`. Labels and splits are untouched.
pub fn augment(g: &Graph, mask_rate: f64, drop_rate: f64, seed: u64) -> Result<Graph> {
    for (name, r) in [("mask_rate", mask_rate), ("drop_rate", drop_rate)] {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Validation(format!("{name} {r} outside [0, 1]")));
        }
    }
    let mut features = g.features().clone();
    if mask_rate > 0.0 {
        let mut r = rng::stream(seed, "augment/mask");
        for v in features.as_mut_slice() {
            if r.random::<f64>() < mask_rate {
                *v = 0.0;
            }
        }
    }
    let edges = if drop_rate > 0.0 {
        let mut r = rng::stream(seed, "augment/drop");
        g.edges()
            .iter()
            .copied()
            .filter(|_| r.random::<f64>() >= drop_rate)
            .collect()
    } else {
        g.edges().to_vec()
    };
    let mut out = g.with_edges_unchecked(edges);
    out = out.with_features(features)?;
    Ok(out)
}
