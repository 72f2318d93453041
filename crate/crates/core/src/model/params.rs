use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Dense row-major matrix. Vectors are stored as a single row.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn random(rows: usize, cols: usize, std: f64, rng: &mut SplitMix64) -> Self {
        let normal = Normal::new(0.0, std).expect("positive std");
        Tensor {
            rows,
            cols,
            data: (0..rows * cols).map(|_| normal.sample(rng)).collect(),
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub attn_norm_gain: Tensor,
    pub attn_norm_bias: Tensor,
    pub w_query: Tensor,
    pub b_query: Tensor,
    pub w_key: Tensor,
    pub b_key: Tensor,
    pub w_value: Tensor,
    pub b_value: Tensor,
    pub w_attn_out: Tensor,
    pub b_attn_out: Tensor,
    pub ff_norm_gain: Tensor,
    pub ff_norm_bias: Tensor,
    pub w_ff_in: Tensor,
    pub b_ff_in: Tensor,
    pub w_ff_out: Tensor,
    pub b_ff_out: Tensor,
}

/// Field order used everywhere parameters are flattened (checkpoints,
/// optimizer state, gradient checks).
pub const LAYER_FIELDS: [&str; 16] = [
    "attn_norm_gain",
    "attn_norm_bias",
    "w_query",
    "b_query",
    "w_key",
    "b_key",
    "w_value",
    "b_value",
    "w_attn_out",
    "b_attn_out",
    "ff_norm_gain",
    "ff_norm_bias",
    "w_ff_in",
    "b_ff_in",
    "w_ff_out",
    "b_ff_out",
];

impl LayerParams {
    fn zeros(cfg: &ModelConfig) -> Self {
        let (d, f) = (cfg.d_model, cfg.d_ff);
        LayerParams {
            attn_norm_gain: Tensor::zeros(1, d),
            attn_norm_bias: Tensor::zeros(1, d),
            w_query: Tensor::zeros(d, d),
            b_query: Tensor::zeros(1, d),
            w_key: Tensor::zeros(d, d),
            b_key: Tensor::zeros(1, d),
            w_value: Tensor::zeros(d, d),
            b_value: Tensor::zeros(1, d),
            w_attn_out: Tensor::zeros(d, d),
            b_attn_out: Tensor::zeros(1, d),
            ff_norm_gain: Tensor::zeros(1, d),
            ff_norm_bias: Tensor::zeros(1, d),
            w_ff_in: Tensor::zeros(d, f),
            b_ff_in: Tensor::zeros(1, f),
            w_ff_out: Tensor::zeros(f, d),
            b_ff_out: Tensor::zeros(1, d),
        }
    }

    fn tensors(&self) -> [&Tensor; 16] {
        [
            &self.attn_norm_gain,
            &self.attn_norm_bias,
            &self.w_query,
            &self.b_query,
            &self.w_key,
            &self.b_key,
            &self.w_value,
            &self.b_value,
            &self.w_attn_out,
            &self.b_attn_out,
            &self.ff_norm_gain,
            &self.ff_norm_bias,
            &self.w_ff_in,
            &self.b_ff_in,
            &self.w_ff_out,
            &self.b_ff_out,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 16] {
        [
            &mut self.attn_norm_gain,
            &mut self.attn_norm_bias,
            &mut self.w_query,
            &mut self.b_query,
            &mut self.w_key,
            &mut self.b_key,
            &mut self.w_value,
            &mut self.b_value,
            &mut self.w_attn_out,
            &mut self.b_attn_out,
            &mut self.ff_norm_gain,
            &mut self.ff_norm_bias,
            &mut self.w_ff_in,
            &mut self.b_ff_in,
            &mut self.w_ff_out,
            &mut self.b_ff_out,
        ]
    }
}

/// All trainable weights. The same structure doubles as a gradient and as
/// optimizer moment storage.
///
/// Flattened order: `token_embedding`, `position_embedding`, each layer's
/// fields in [`LAYER_FIELDS`] order, `final_norm_gain`, `final_norm_bias`,
/// then `output_projection` when the output is not tied.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub token_embedding: Tensor,
    pub position_embedding: Tensor,
    pub layers: Vec<LayerParams>,
    pub final_norm_gain: Tensor,
    pub final_norm_bias: Tensor,
    /// `None` in tied mode: logits are scored against `token_embedding`.
    pub output_projection: Option<Tensor>,
}

impl ModelParams {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (v, d) = (cfg.vocab_size, cfg.d_model);
        ModelParams {
            token_embedding: Tensor::zeros(v, d),
            position_embedding: Tensor::zeros(cfg.max_len, d),
            layers: (0..cfg.n_layers).map(|_| LayerParams::zeros(cfg)).collect(),
            final_norm_gain: Tensor::zeros(1, d),
            final_norm_bias: Tensor::zeros(1, d),
            output_projection: (!cfg.tie_output_to_embeddings).then(|| Tensor::zeros(v, d)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, t) in out.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x = 0.0);
        }
        out
    }

    /// Gaussian initialization: embeddings with std 0.1, weight matrices with
    /// std `1/sqrt(fan_in)`, norm gains 1 and all biases 0.
    pub fn init(cfg: &ModelConfig, rng: &mut SplitMix64) -> Self {
        let (v, d, f) = (cfg.vocab_size, cfg.d_model, cfg.d_ff);
        let emb_std = 0.1;
        let mut p = ModelParams::zeros(cfg);
        p.token_embedding = Tensor::random(v, d, emb_std, rng);
        p.position_embedding = Tensor::random(cfg.max_len, d, emb_std, rng);
        for layer in &mut p.layers {
            layer.attn_norm_gain = Tensor::filled(1, d, 1.0);
            layer.ff_norm_gain = Tensor::filled(1, d, 1.0);
            let sd = (d as f64).powf(-0.5);
            layer.w_query = Tensor::random(d, d, sd, rng);
            layer.w_key = Tensor::random(d, d, sd, rng);
            layer.w_value = Tensor::random(d, d, sd, rng);
            layer.w_attn_out = Tensor::random(d, d, sd, rng);
            layer.w_ff_in = Tensor::random(d, f, sd, rng);
            layer.w_ff_out = Tensor::random(f, d, (f as f64).powf(-0.5), rng);
        }
        p.final_norm_gain = Tensor::filled(1, d, 1.0);
        if let Some(out) = p.output_projection.as_mut() {
            *out = Tensor::random(v, d, emb_std, rng);
        }
        p
    }

    /// Random values everywhere, including norms and biases. Used to probe
    /// gradients away from the symmetric initialization.
    pub fn perturbed(cfg: &ModelConfig, std: f64, rng: &mut impl Rng) -> Self {
        let mut p = ModelParams::zeros(cfg);
        let normal = Normal::new(0.0, std).expect("positive std");
        for (name, t) in p.tensors_mut() {
            let base = if name.ends_with("norm_gain") {
                1.0
            } else {
                0.0
            };
            t.data
                .iter_mut()
                .for_each(|x| *x = base + normal.sample(rng));
        }
        p
    }

    /// Named tensors in flattened order.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("token_embedding".to_string(), &self.token_embedding),
            ("position_embedding".to_string(), &self.position_embedding),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, t) in LAYER_FIELDS.iter().zip(layer.tensors()) {
                out.push((format!("layers.{i}.{name}"), t));
            }
        }
        out.push(("final_norm_gain".to_string(), &self.final_norm_gain));
        out.push(("final_norm_bias".to_string(), &self.final_norm_bias));
        if let Some(o) = &self.output_projection {
            out.push(("output_projection".to_string(), o));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = vec![
            ("token_embedding".to_string(), &mut self.token_embedding),
            (
                "position_embedding".to_string(),
                &mut self.position_embedding,
            ),
        ];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (name, t) in LAYER_FIELDS.iter().zip(layer.tensors_mut()) {
                out.push((format!("layers.{i}.{name}"), t));
            }
        }
        out.push(("final_norm_gain".to_string(), &mut self.final_norm_gain));
        out.push(("final_norm_bias".to_string(), &mut self.final_norm_bias));
        if let Some(o) = self.output_projection.as_mut() {
            out.push(("output_projection".to_string(), o));
        }
        out
    }

    pub fn shapes(&self) -> Vec<(String, (usize, usize))> {
        self.tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape()))
            .collect()
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// The matrix whose rows score vocabulary tokens (`w_v`).
    pub fn output_weights(&self) -> &Tensor {
        self.output_projection
            .as_ref()
            .unwrap_or(&self.token_embedding)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.data.iter().all(|x| x.is_finite()))
    }

    /// Checks every tensor against the shapes implied by `cfg`.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = ModelParams::zeros(cfg).shapes();
        let actual = self.shapes();
        if expected != actual {
            return Err(Error::ShapeMismatch(format!(
                "parameters do not match config {cfg:?}"
            )));
        }
        Ok(())
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) -> Result<()> {
        let theirs = other.tensors();
        let mut mine = self.tensors_mut();
        if mine.len() != theirs.len() {
            return Err(Error::ShapeMismatch("parameter trees differ".into()));
        }
        for ((n, a), (_, b)) in mine.iter_mut().zip(theirs) {
            if a.shape() != b.shape() {
                return Err(Error::ShapeMismatch(format!("tensor {n}")));
            }
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
        Ok(())
    }
}
