//! Pre-norm transformer encoder with hand-derived backward pass.
//!
//! Only the mask position is scored, so the backward pass starts from a
//! single hidden row and flows through every layer to all positions.

use super::config::ModelConfig;
use super::params::{ModelParams, Tensor};
use crate::corpus::{TokenId, MASK_ID};
use crate::error::{Error, Result};

const NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// One masked-prediction training item: model input, mask position and the
/// token that should fill it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedItem {
    pub input: Vec<TokenId>,
    pub mask_pos: usize,
    pub target: TokenId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub sum: f64,
    pub mean: f64,
}

/// Anything that yields a distribution over the vocabulary for a masked
/// position.
pub trait MaskedLm: Sync {
    fn vocab_size(&self) -> usize;
    fn max_len(&self) -> usize;
    fn mask_distribution(&self, input: &[TokenId], mask_pos: usize) -> Result<Vec<f64>>;
}

/// The micro masked language model: configuration plus weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroMlm {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl MaskedLm for MicroMlm {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn mask_distribution(&self, input: &[TokenId], mask_pos: usize) -> Result<Vec<f64>> {
        self.forward_mask_distribution(input, mask_pos)
    }
}

struct NormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

struct LayerCache {
    norm1: NormCache,
    normed1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    attn: Vec<f64>,
    ctx: Vec<f64>,
    norm2: NormCache,
    normed2: Vec<f64>,
    pre_act: Vec<f64>,
    act: Vec<f64>,
}

struct Trace {
    tokens: Vec<TokenId>,
    mask_pos: usize,
    layers: Vec<LayerCache>,
    final_norm: NormCache,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

fn layer_norm(
    x: &[f64],
    rows: usize,
    d: usize,
    gain: &Tensor,
    bias: &Tensor,
) -> (Vec<f64>, NormCache) {
    let mut out = vec![0.0; rows * d];
    let mut xhat = vec![0.0; rows * d];
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + NORM_EPS).sqrt();
        inv_std[r] = inv;
        for c in 0..d {
            let h = (row[c] - mean) * inv;
            xhat[r * d + c] = h;
            out[r * d + c] = gain.data[c] * h + bias.data[c];
        }
    }
    (out, NormCache { xhat, inv_std })
}

fn layer_norm_backward(
    dout: &[f64],
    cache: &NormCache,
    rows: usize,
    d: usize,
    gain: &Tensor,
    dgain: &mut Tensor,
    dbias: &mut Tensor,
) -> Vec<f64> {
    let mut dx = vec![0.0; rows * d];
    let mut dxhat = vec![0.0; d];
    for r in 0..rows {
        let dy = &dout[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        for c in 0..d {
            dgain.data[c] += dy[c] * xh[c];
            dbias.data[c] += dy[c];
            dxhat[c] = dy[c] * gain.data[c];
        }
        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        let inv = cache.inv_std[r];
        for c in 0..d {
            dx[r * d + c] = inv * (dxhat[c] - mean_d - xh[c] * mean_dx);
        }
    }
    dx
}

/// `x · W + b` for `rows` row vectors; `W` is `in × out`.
fn linear(x: &[f64], rows: usize, w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (din, dout) = w.shape();
    let mut y = vec![0.0; rows * dout];
    for r in 0..rows {
        let yr = &mut y[r * dout..(r + 1) * dout];
        yr.copy_from_slice(&b.data);
        for i in 0..din {
            let xi = x[r * din + i];
            if xi == 0.0 {
                continue;
            }
            for (yo, wo) in yr.iter_mut().zip(w.row(i)) {
                *yo += xi * wo;
            }
        }
    }
    y
}

/// Accumulates `dW += xᵀ·dy`, `db += Σ dy` and returns `dy · Wᵀ`.
fn linear_backward(
    x: &[f64],
    dy: &[f64],
    rows: usize,
    w: &Tensor,
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Vec<f64> {
    let (din, dout) = w.shape();
    let mut dx = vec![0.0; rows * din];
    for r in 0..rows {
        let dyr = &dy[r * dout..(r + 1) * dout];
        if dyr.iter().all(|v| *v == 0.0) {
            continue;
        }
        for (g, d) in db.data.iter_mut().zip(dyr) {
            *g += d;
        }
        for i in 0..din {
            let xi = x[r * din + i];
            let wrow = w.row(i);
            let mut acc = 0.0;
            for o in 0..dout {
                acc += dyr[o] * wrow[o];
            }
            dx[r * din + i] = acc;
            if xi != 0.0 {
                for (g, d) in dw.row_mut(i).iter_mut().zip(dyr) {
                    *g += xi * d;
                }
            }
        }
    }
    dx
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_K * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_K * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * u * u)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
    out
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

impl MicroMlm {
    pub fn new(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(MicroMlm { config, params })
    }

    fn check_input(&self, input: &[TokenId], mask_pos: usize) -> Result<()> {
        if input.len() > self.config.max_len {
            return Err(Error::Length {
                len: input.len(),
                max_len: self.config.max_len,
            });
        }
        if input.get(mask_pos) != Some(&MASK_ID) {
            return Err(Error::MaskPosition { pos: mask_pos });
        }
        if let Some(&id) = input.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(())
    }

    fn run(&self, input: &[TokenId], mask_pos: usize) -> Result<Trace> {
        self.check_input(input, mask_pos)?;
        let p = &self.params;
        let (t, d) = (input.len(), self.config.d_model);
        let heads = self.config.n_heads;
        let hd = self.config.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();

        let mut x = vec![0.0; t * d];
        for (pos, &tok) in input.iter().enumerate() {
            let e = p.token_embedding.row(tok);
            let pe = p.position_embedding.row(pos);
            for c in 0..d {
                x[pos * d + c] = e[c] + pe[c];
            }
        }

        let mut layers = Vec::with_capacity(p.layers.len());
        for lp in &p.layers {
            let (normed1, norm1) = layer_norm(&x, t, d, &lp.attn_norm_gain, &lp.attn_norm_bias);
            let q = linear(&normed1, t, &lp.w_query, &lp.b_query);
            let k = linear(&normed1, t, &lp.w_key, &lp.b_key);
            let v = linear(&normed1, t, &lp.w_value, &lp.b_value);
            let mut attn = vec![0.0; heads * t * t];
            let mut ctx = vec![0.0; t * d];
            for h in 0..heads {
                let off = h * hd;
                for i in 0..t {
                    let scores: Vec<f64> = (0..t)
                        .map(|j| {
                            let qi = &q[i * d + off..i * d + off + hd];
                            let kj = &k[j * d + off..j * d + off + hd];
                            scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>()
                        })
                        .collect();
                    let probs = softmax(&scores);
                    for (j, &pij) in probs.iter().enumerate() {
                        for c in 0..hd {
                            ctx[i * d + off + c] += pij * v[j * d + off + c];
                        }
                    }
                    attn[(h * t + i) * t..(h * t + i + 1) * t].copy_from_slice(&probs);
                }
            }
            let attn_out = linear(&ctx, t, &lp.w_attn_out, &lp.b_attn_out);
            for (xv, o) in x.iter_mut().zip(&attn_out) {
                *xv += o;
            }
            let (normed2, norm2) = layer_norm(&x, t, d, &lp.ff_norm_gain, &lp.ff_norm_bias);
            let pre_act = linear(&normed2, t, &lp.w_ff_in, &lp.b_ff_in);
            let act: Vec<f64> = pre_act.iter().map(|&u| gelu(u)).collect();
            let ff_out = linear(&act, t, &lp.w_ff_out, &lp.b_ff_out);
            for (xv, o) in x.iter_mut().zip(&ff_out) {
                *xv += o;
            }
            layers.push(LayerCache {
                norm1,
                normed1,
                q,
                k,
                v,
                attn,
                ctx,
                norm2,
                normed2,
                pre_act,
                act,
            });
        }

        let row = &x[mask_pos * d..(mask_pos + 1) * d];
        let (hidden, final_norm) = layer_norm(row, 1, d, &p.final_norm_gain, &p.final_norm_bias);
        let w_out = p.output_weights();
        let logits: Vec<f64> = (0..self.config.vocab_size)
            .map(|tok| w_out.row(tok).iter().zip(&hidden).map(|(a, b)| a * b).sum())
            .collect();

        Ok(Trace {
            tokens: input.to_vec(),
            mask_pos,
            layers,
            final_norm,
            hidden,
            logits,
        })
    }

    /// Softmax over the full vocabulary at `mask_pos`.
    pub fn forward_mask_distribution(
        &self,
        input: &[TokenId],
        mask_pos: usize,
    ) -> Result<Vec<f64>> {
        Ok(softmax(&self.run(input, mask_pos)?.logits))
    }

    /// Pre-softmax scores at `mask_pos`.
    pub fn mask_logits(&self, input: &[TokenId], mask_pos: usize) -> Result<Vec<f64>> {
        Ok(self.run(input, mask_pos)?.logits)
    }

    fn check_target(&self, target: TokenId) -> Result<()> {
        if target >= self.config.vocab_size {
            return Err(Error::TokenOutOfRange {
                id: target,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(())
    }

    /// Negative log-likelihood of one item.
    pub fn item_loss(&self, item: &MaskedItem) -> Result<f64> {
        self.check_target(item.target)?;
        let logits = self.run(&item.input, item.mask_pos)?.logits;
        Ok(log_sum_exp(&logits) - logits[item.target])
    }

    /// Summed negative log-likelihood over the batch, with the mean alongside.
    pub fn mlm_loss(&self, batch: &[MaskedItem]) -> Result<LossValue> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let mut sum = 0.0;
        for item in batch {
            sum += self.item_loss(item)?;
        }
        Ok(LossValue {
            sum,
            mean: sum / batch.len() as f64,
        })
    }

    /// Exact gradient of the summed loss ([`MicroMlm::mlm_loss`]'s `sum`).
    pub fn gradients(&self, batch: &[MaskedItem]) -> Result<(ModelParams, LossValue)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let mut grads = self.params.zeros_like();
        let losses = self.accumulate_gradients(batch, 1.0, &mut grads)?;
        let sum: f64 = losses.iter().sum();
        Ok((
            grads,
            LossValue {
                sum,
                mean: sum / batch.len() as f64,
            },
        ))
    }

    /// Adds `scale * ∇ loss(item)` into `grads` for every item, in batch
    /// order, and returns the per-item losses.
    pub fn accumulate_gradients(
        &self,
        batch: &[MaskedItem],
        scale: f64,
        grads: &mut ModelParams,
    ) -> Result<Vec<f64>> {
        let mut losses = Vec::with_capacity(batch.len());
        for item in batch {
            self.check_target(item.target)?;
            let trace = self.run(&item.input, item.mask_pos)?;
            let lse = log_sum_exp(&trace.logits);
            losses.push(lse - trace.logits[item.target]);
            let mut dlogits: Vec<f64> = trace
                .logits
                .iter()
                .map(|l| scale * (l - lse).exp())
                .collect();
            dlogits[item.target] -= scale;
            self.backward(&trace, &dlogits, grads);
        }
        Ok(losses)
    }

    fn backward(&self, tr: &Trace, dlogits: &[f64], g: &mut ModelParams) {
        let p = &self.params;
        let (t, d) = (tr.tokens.len(), self.config.d_model);
        let heads = self.config.n_heads;
        let hd = self.config.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();

        let w_out = p.output_weights();
        let mut dhidden = vec![0.0; d];
        {
            let g_out = match g.output_projection.as_mut() {
                Some(o) => o,
                None => &mut g.token_embedding,
            };
            for (tok, &dl) in dlogits.iter().enumerate() {
                if dl == 0.0 {
                    continue;
                }
                let wrow = w_out.row(tok);
                for c in 0..d {
                    dhidden[c] += dl * wrow[c];
                }
                for (gv, h) in g_out.row_mut(tok).iter_mut().zip(&tr.hidden) {
                    *gv += dl * h;
                }
            }
        }
        let drow = layer_norm_backward(
            &dhidden,
            &tr.final_norm,
            1,
            d,
            &p.final_norm_gain,
            &mut g.final_norm_gain,
            &mut g.final_norm_bias,
        );
        let mut dx = vec![0.0; t * d];
        dx[tr.mask_pos * d..(tr.mask_pos + 1) * d].copy_from_slice(&drow);

        for (li, (lp, cache)) in p.layers.iter().zip(&tr.layers).enumerate().rev() {
            let lg = &mut g.layers[li];

            // Feed-forward residual branch.
            let dact = linear_backward(
                &cache.act,
                &dx,
                t,
                &lp.w_ff_out,
                &mut lg.w_ff_out,
                &mut lg.b_ff_out,
            );
            let dpre: Vec<f64> = dact
                .iter()
                .zip(&cache.pre_act)
                .map(|(da, &u)| da * gelu_grad(u))
                .collect();
            let dnormed2 = linear_backward(
                &cache.normed2,
                &dpre,
                t,
                &lp.w_ff_in,
                &mut lg.w_ff_in,
                &mut lg.b_ff_in,
            );
            let dmid_ff = layer_norm_backward(
                &dnormed2,
                &cache.norm2,
                t,
                d,
                &lp.ff_norm_gain,
                &mut lg.ff_norm_gain,
                &mut lg.ff_norm_bias,
            );
            for (a, b) in dx.iter_mut().zip(&dmid_ff) {
                *a += b;
            }

            // Attention residual branch.
            let dctx = linear_backward(
                &cache.ctx,
                &dx,
                t,
                &lp.w_attn_out,
                &mut lg.w_attn_out,
                &mut lg.b_attn_out,
            );
            let mut dq = vec![0.0; t * d];
            let mut dk = vec![0.0; t * d];
            let mut dv = vec![0.0; t * d];
            let mut dprob = vec![0.0; t];
            for h in 0..heads {
                let off = h * hd;
                for i in 0..t {
                    let probs = &cache.attn[(h * t + i) * t..(h * t + i + 1) * t];
                    let dci = &dctx[i * d + off..i * d + off + hd];
                    if dci.iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    for j in 0..t {
                        let vj = &cache.v[j * d + off..j * d + off + hd];
                        dprob[j] = dci.iter().zip(vj).map(|(a, b)| a * b).sum();
                        for c in 0..hd {
                            dv[j * d + off + c] += probs[j] * dci[c];
                        }
                    }
                    let dot: f64 = probs.iter().zip(&dprob).map(|(a, b)| a * b).sum();
                    for j in 0..t {
                        let ds = probs[j] * (dprob[j] - dot) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        for c in 0..hd {
                            dq[i * d + off + c] += ds * cache.k[j * d + off + c];
                            dk[j * d + off + c] += ds * cache.q[i * d + off + c];
                        }
                    }
                }
            }
            let mut dnormed1 = linear_backward(
                &cache.normed1,
                &dq,
                t,
                &lp.w_query,
                &mut lg.w_query,
                &mut lg.b_query,
            );
            let from_k = linear_backward(
                &cache.normed1,
                &dk,
                t,
                &lp.w_key,
                &mut lg.w_key,
                &mut lg.b_key,
            );
            let from_v = linear_backward(
                &cache.normed1,
                &dv,
                t,
                &lp.w_value,
                &mut lg.w_value,
                &mut lg.b_value,
            );
            for ((a, b), c) in dnormed1.iter_mut().zip(&from_k).zip(&from_v) {
                *a += b + c;
            }
            let din = layer_norm_backward(
                &dnormed1,
                &cache.norm1,
                t,
                d,
                &lp.attn_norm_gain,
                &mut lg.attn_norm_gain,
                &mut lg.attn_norm_bias,
            );
            for (a, b) in dx.iter_mut().zip(&din) {
                *a += b;
            }
        }

        for (pos, &tok) in tr.tokens.iter().enumerate() {
            let row = &dx[pos * d..(pos + 1) * d];
            for (gv, r) in g.token_embedding.row_mut(tok).iter_mut().zip(row) {
                *gv += r;
            }
            for (gv, r) in g.position_embedding.row_mut(pos).iter_mut().zip(row) {
                *gv += r;
            }
        }
    }
}
