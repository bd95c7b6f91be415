//! Two-layer graph convolution encoder with a hand-written reverse pass,
//! and its self-supervised link-prediction pretraining.
//!
//! ```text
//! H¹ = relu(Â·F·(W¹ + Δ¹))
//! X  = Â·H¹·(W² + Δ²)          Δˡ = W_downˡ·W_upˡ  (zero without an adapter)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Propagation};
use crate::numerics::{dot, rng, Matrix};
use crate::optim::Adam;
use crate::peft::{LoraAdapter, LoraLayer};

/// Weights of the shared encoder. Once `frozen`, nothing in the crate mutates them.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneParams {
    w1: Matrix,
    w2: Matrix,
    frozen: bool,
}

impl BackboneParams {
    /// Glorot-uniform initialization under the given seed.
    pub fn init(input_dim: usize, hidden_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::Validation("backbone dimensions must be at least 1".into()));
        }
        let mut r = rng::stream(seed, "backbone/init");
        let w1 = rng::glorot_uniform(input_dim, hidden_dim, &mut r);
        let w2 = rng::glorot_uniform(hidden_dim, hidden_dim, &mut r);
        Ok(BackboneParams {
            w1,
            w2,
            frozen: false,
        })
    }

    pub fn from_weights(w1: Matrix, w2: Matrix, frozen: bool) -> Result<Self> {
        if w1.cols() != w2.rows() || w2.rows() != w2.cols() {
            return Err(Error::Validation(format!(
                "incompatible backbone weights {:?} and {:?}",
                w1.shape(),
                w2.shape()
            )));
        }
        Ok(BackboneParams { w1, w2, frozen })
    }

    pub fn w1(&self) -> &Matrix {
        &self.w1
    }

    pub fn w2(&self) -> &Matrix {
        &self.w2
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.rows() * self.w1.cols() + self.w2.rows() * self.w2.cols()
    }

    /// Layer dimensions `[(d_in, h), (h, h)]`, the shapes adapters must match.
    pub fn layer_dims(&self) -> [(usize, usize); 2] {
        [self.w1.shape(), self.w2.shape()]
    }

    /// Applies a gradient step to an unfrozen backbone.
    pub(crate) fn apply_update(&mut self, adam: &mut Adam, grads: &Gradients) -> Result<()> {
        if self.frozen {
            return Err(Error::Validation("backbone is frozen".into()));
        }
        adam.step(&mut [&mut self.w1, &mut self.w2], &[&grads.w1, &grads.w2]);
        Ok(())
    }
}

/// Intermediate values of one forward pass, consumed by [`Tape::backward`].
#[derive(Debug)]
pub struct Tape<'a> {
    prop: &'a Propagation,
    propagated_input: Matrix,
    pre_activation: Matrix,
    propagated_hidden: Matrix,
    w2_eff: Matrix,
    adapter: Option<Vec<LoraLayer>>,
}

/// Gradients of a scalar loss with respect to every parameter in the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Matrix,
    pub w2: Matrix,
    /// Per-layer `(W_down, W_up)` gradients, present when an adapter was attached.
    pub adapter: Option<Vec<LoraLayer>>,
}

fn effective_weight(base: &Matrix, layer: Option<&LoraLayer>) -> Matrix {
    match layer {
        Some(l) => base.add(&l.down.matmul(&l.up)),
        None => base.clone(),
    }
}

/// Embeds every node of a graph. `features` must already be aligned to the
/// backbone input width.
pub fn forward<'a>(
    prop: &'a Propagation,
    features: &Matrix,
    params: &BackboneParams,
    adapter: Option<&LoraAdapter>,
) -> Result<(Matrix, Tape<'a>)> {
    if features.rows() != prop.num_nodes() {
        return Err(Error::Validation(format!(
            "{} feature rows for a {}-node graph",
            features.rows(),
            prop.num_nodes()
        )));
    }
    if features.cols() != params.input_dim() {
        return Err(Error::Validation(format!(
            "feature width {} does not match backbone input {}",
            features.cols(),
            params.input_dim()
        )));
    }
    if let Some(a) = adapter {
        a.check_dims(params.layer_dims())?;
    }
    let layers = adapter.map(|a| a.layers());
    let w1_eff = effective_weight(&params.w1, layers.map(|l| &l[0]));
    let w2_eff = effective_weight(&params.w2, layers.map(|l| &l[1]));

    let propagated_input = prop.apply(features);
    let pre_activation = propagated_input.matmul(&w1_eff);
    let hidden = pre_activation.map(|v| v.max(0.0));
    let propagated_hidden = prop.apply(&hidden);
    let x = propagated_hidden.matmul(&w2_eff);
    Ok((
        x,
        Tape {
            prop,
            propagated_input,
            pre_activation,
            propagated_hidden,
            w2_eff,
            adapter: layers.map(|l| l.to_vec()),
        },
    ))
}

impl Tape<'_> {
    /// Reverse pass for `dL/dX`. Consumes the tape.
    pub fn backward(self, grad_x: &Matrix) -> Result<Gradients> {
        if grad_x.shape() != (self.propagated_hidden.rows(), self.w2_eff.cols()) {
            return Err(Error::Validation(format!(
                "embedding gradient has shape {:?}, expected {:?}",
                grad_x.shape(),
                (self.propagated_hidden.rows(), self.w2_eff.cols())
            )));
        }
        let g_w2 = self.propagated_hidden.t_matmul(grad_x);
        let g_q = grad_x.matmul_t(&self.w2_eff);
        let g_h = self.prop.apply(&g_q);
        let g_z = g_h.zip_with(&self.pre_activation, |g, z| if z > 0.0 { g } else { 0.0 });
        let g_w1 = self.propagated_input.t_matmul(&g_z);

        let adapter = self.adapter.map(|layers| {
            [&g_w1, &g_w2]
                .into_iter()
                .zip(&layers)
                .map(|(g_eff, l)| LoraLayer {
                    down: g_eff.matmul_t(&l.up),
                    up: l.down.t_matmul(g_eff),
                })
                .collect()
        });
        Ok(Gradients {
            w1: g_w1,
            w2: g_w2,
            adapter,
        })
    }
}

/// Link-prediction pretraining settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            hidden_dim: 64,
            epochs: 200,
            learning_rate: 5e-2,
            weight_decay: 5e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub params: BackboneParams,
    /// Loss before each epoch's update.
    pub losses: Vec<f64>,
}

fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on dot-product edge scores and its gradient with
/// respect to the embeddings. Pairs are `(u, v, target)`.
pub fn link_bce(x: &Matrix, pairs: &[(usize, usize, f64)]) -> (f64, Matrix) {
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    let mut loss = 0.0;
    let scale = 1.0 / pairs.len().max(1) as f64;
    for &(u, v, y) in pairs {
        let s = dot(x.row(u), x.row(v));
        loss += softplus(s) - y * s;
        let g = (sigmoid(s) - y) * scale;
        let xv = x.row(v).to_vec();
        let xu = x.row(u).to_vec();
        grad.row_mut(u).iter_mut().zip(&xv).for_each(|(a, b)| *a += g * b);
        grad.row_mut(v).iter_mut().zip(&xu).for_each(|(a, b)| *a += g * b);
    }
    (loss * scale, grad)
}

/// Uniform node pairs `(u, v)` with `u != v`, one per positive edge.
pub(crate) fn sample_negatives<R: Rng>(n: usize, count: usize, r: &mut R) -> Vec<(usize, usize)> {
    (0..count)
        .map(|_| loop {
            let u = r.random_range(0..n);
            let v = r.random_range(0..n);
            if u != v {
                break (u, v);
            }
        })
        .collect()
}

/// Trains the bare backbone to score existing edges above random pairs and
/// returns it frozen. `g` must carry aligned features.
pub fn pretrain_link_prediction(g: &Graph, cfg: &PretrainConfig) -> Result<Pretrained> {
    if g.edges().is_empty() {
        return Err(Error::Validation(
            "link-prediction pretraining needs at least one edge".into(),
        ));
    }
    if g.num_nodes() < 2 {
        return Err(Error::Validation("pretraining needs at least two nodes".into()));
    }
    let mut params = BackboneParams::init(g.feature_dim(), cfg.hidden_dim, cfg.seed)?;
    let prop = Propagation::new(g);
    let mut adam = Adam::new(cfg.learning_rate, cfg.weight_decay);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut r = rng::indexed_stream(cfg.seed, "pretrain/negatives", epoch as u64);
        let negatives = sample_negatives(g.num_nodes(), g.edges().len(), &mut r);
        let pairs: Vec<(usize, usize, f64)> = g
            .edges()
            .iter()
            .map(|&(u, v)| (u, v, 1.0))
            .chain(negatives.into_iter().map(|(u, v)| (u, v, 0.0)))
            .collect();
        let (x, tape) = forward(&prop, g.features(), &params, None)?;
        let (loss, grad_x) = link_bce(&x, &pairs);
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "pretraining loss diverged at epoch {epoch}"
            )));
        }
        losses.push(loss);
        let grads = tape.backward(&grad_x)?;
        params.apply_update(&mut adam, &grads)?;
    }
    params.freeze();
    Ok(Pretrained { params, losses })
}
