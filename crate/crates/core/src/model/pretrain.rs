use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::{MaskedItem, MicroMlm};
use super::optim::{AdamConfig, OptimizerState};
use crate::corpus::{Vocab, MASK_ID};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    /// Probability that any given token becomes a masked training item.
    pub mask_fraction: f64,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 12,
            mask_fraction: 0.3,
            batch_size: 32,
            adam: AdamConfig {
                lr: 3e-3,
                ..AdamConfig::default()
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainEpoch {
    pub epoch: usize,
    pub items: usize,
    /// Average per-item loss over the epoch (0 when no item was masked).
    pub mean_loss: f64,
}

/// Builds one epoch of single-mask items. Lines longer than the model
/// window keep their last `max_len` tokens.
fn epoch_items(lines: &[Vec<usize>], mask_fraction: f64, rng: &mut impl Rng) -> Vec<MaskedItem> {
    let mut items = Vec::new();
    for line in lines {
        for pos in 0..line.len() {
            if rng.gen::<f64>() < mask_fraction {
                let mut input = line.clone();
                let target = input[pos];
                input[pos] = MASK_ID;
                items.push(MaskedItem {
                    input,
                    mask_pos: pos,
                    target,
                });
            }
        }
    }
    items
}

/// Masked-LM pretraining with dynamic masking: a fresh mask draw every
/// epoch, batches averaged, Adam updates.
pub fn pretrain<S: AsRef<str>>(
    mut model: MicroMlm,
    corpus: &[S],
    vocab: &Vocab,
    cfg: &PretrainConfig,
) -> Result<(MicroMlm, Vec<PretrainEpoch>)> {
    if corpus.is_empty() {
        return Err(Error::Empty("pretraining corpus"));
    }
    if cfg.batch_size == 0 || !(0.0..=1.0).contains(&cfg.mask_fraction) {
        return Err(Error::Config(
            "pretraining needs batch_size ≥ 1 and mask_fraction in [0, 1]".into(),
        ));
    }
    if vocab.len() != model.config.vocab_size {
        return Err(Error::ShapeMismatch(format!(
            "vocabulary has {} tokens, model expects {}",
            vocab.len(),
            model.config.vocab_size
        )));
    }
    cfg.adam.validate()?;
    let max_len = model.config.max_len;
    let lines: Vec<Vec<usize>> = corpus
        .iter()
        .map(|l| {
            let ids = vocab.tokenize(l.as_ref());
            let skip = ids.len().saturating_sub(max_len);
            ids[skip..].to_vec()
        })
        .filter(|ids| !ids.is_empty())
        .collect();

    let mut rng = stream_rng(cfg.seed, Stream::Pretrain);
    let mut opt = OptimizerState::new(&model.params, cfg.adam);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut items = epoch_items(&lines, cfg.mask_fraction, &mut rng);
        items.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in items.chunks(cfg.batch_size) {
            let mut grads = model.params.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            let losses = model.accumulate_gradients(batch, scale, &mut grads)?;
            total += losses.iter().sum::<f64>();
            opt.step(&mut model.params, &grads)?;
        }
        trace.push(PretrainEpoch {
            epoch: epoch + 1,
            items: items.len(),
            mean_loss: if items.is_empty() {
                0.0
            } else {
                total / items.len() as f64
            },
        });
    }
    Ok((model, trace))
}
