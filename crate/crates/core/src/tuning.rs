//! Prompt-based tuning: minimize the masked-LM negative log-likelihood of
//! label words at the template's mask position.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentedExample;
use crate::corpus::DatasetSplit;
use crate::error::{Error, Result};
use crate::inference::evaluate;
use crate::model::{AdamConfig, MaskedItem, MicroMlm, OptimizerState};
use crate::rng::rng_from_seed;
use crate::template::Template;
use crate::verbalizer::Verbalizer;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossScaling {
    /// Gradient of the summed batch loss.
    Sum,
    /// Gradient of the batch-averaged loss.
    #[default]
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub shuffle_seed: u64,
    pub loss_scaling: LossScaling,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            epochs: 10,
            batch_size: 4,
            lr: 1e-3,
            shuffle_seed: 0,
            loss_scaling: LossScaling::Mean,
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be at least 1".into(),
            ));
        }
        self.adam().validate()
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_loss: f64,
    pub sum_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub model: MicroMlm,
    pub trace: Vec<EpochLoss>,
    pub steps: usize,
    /// Per-epoch validation accuracy, when validation selection is enabled.
    pub val_accuracy: Vec<f64>,
    /// 1-based epoch whose parameters were returned.
    pub selected_epoch: usize,
}

/// Held-out data used to keep the best epoch instead of the last one.
pub struct Validation<'a> {
    pub split: &'a DatasetSplit,
    pub template: &'a Template,
    pub verbalizer: &'a Verbalizer,
}

fn to_items(
    pairs: impl Iterator<Item = (Vec<usize>, usize)>,
    template: &Template,
) -> Result<Vec<MaskedItem>> {
    pairs
        .map(|(x, target)| {
            let (input, mask_pos) = template.apply(&x)?;
            Ok(MaskedItem {
                input,
                mask_pos,
                target,
            })
        })
        .collect()
}

/// Tunes on instance and label-word pairs. Returns final-epoch parameters.
pub fn tune(
    model: &MicroMlm,
    augmented: &[AugmentedExample],
    template: &Template,
    cfg: &TuneConfig,
) -> Result<TuneOutcome> {
    tune_with_validation(model, augmented, template, cfg, None)
}

pub fn tune_with_validation(
    model: &MicroMlm,
    augmented: &[AugmentedExample],
    template: &Template,
    cfg: &TuneConfig,
    validation: Option<Validation<'_>>,
) -> Result<TuneOutcome> {
    if augmented.is_empty() {
        return Err(Error::Empty("augmented training set"));
    }
    let items = to_items(
        augmented
            .iter()
            .map(|a| (a.token_ids.clone(), a.target_word_id)),
        template,
    )?;
    train_items(model, items, cfg, validation)
}

/// Standard prompt tuning: each `(x, y)` is trained toward the single label
/// word of class `y`.
pub fn prompt_tune(
    model: &MicroMlm,
    train: &DatasetSplit,
    template: &Template,
    verbalizer: &Verbalizer,
    cfg: &TuneConfig,
) -> Result<TuneOutcome> {
    prompt_tune_with_validation(model, train, template, verbalizer, cfg, None)
}

pub fn prompt_tune_with_validation(
    model: &MicroMlm,
    train: &DatasetSplit,
    template: &Template,
    verbalizer: &Verbalizer,
    cfg: &TuneConfig,
    validation: Option<Validation<'_>>,
) -> Result<TuneOutcome> {
    if verbalizer.uniform_k() != Some(1) {
        return Err(Error::Config(
            "standard prompt tuning needs exactly one label word per class".into(),
        ));
    }
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let mut pairs = Vec::with_capacity(train.len());
    for ex in &train.examples {
        if ex.class_id >= verbalizer.class_count() {
            return Err(Error::MissingClass {
                class: ex.class_id,
                covered: verbalizer.class_count(),
            });
        }
        pairs.push((ex.token_ids.clone(), verbalizer.words(ex.class_id)[0]));
    }
    let items = to_items(pairs.into_iter(), template)?;
    train_items(model, items, cfg, validation)
}

fn train_items(
    model: &MicroMlm,
    items: Vec<MaskedItem>,
    cfg: &TuneConfig,
    validation: Option<Validation<'_>>,
) -> Result<TuneOutcome> {
    cfg.validate()?;
    let mut model = model.clone();
    let mut opt = OptimizerState::new(&model.params, cfg.adam());
    let mut rng = rng_from_seed(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut item_loss = vec![0.0; items.len()];
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut val_accuracy = Vec::new();
    let mut best: Option<(f64, usize, MicroMlm)> = None;
    let mut steps = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<MaskedItem> = chunk.iter().map(|&i| items[i].clone()).collect();
            let scale = match cfg.loss_scaling {
                LossScaling::Sum => 1.0,
                LossScaling::Mean => 1.0 / batch.len() as f64,
            };
            let mut grads = model.params.zeros_like();
            let losses = model.accumulate_gradients(&batch, scale, &mut grads)?;
            for (&i, l) in chunk.iter().zip(losses) {
                item_loss[i] = l;
            }
            opt.step(&mut model.params, &grads)?;
            steps += 1;
        }
        // Summed in item order so the trace does not depend on the shuffle.
        let sum_loss: f64 = item_loss.iter().sum();
        trace.push(EpochLoss {
            epoch,
            mean_loss: sum_loss / items.len() as f64,
            sum_loss,
        });
        if let Some(v) = &validation {
            let acc = evaluate(&model, v.split, v.template, v.verbalizer)?;
            val_accuracy.push(acc);
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, epoch, model.clone()));
            }
        }
    }

    let (model, selected_epoch) = match best {
        Some((_, epoch, m)) => (m, epoch),
        None => (model, cfg.epochs),
    };
    Ok(TuneOutcome {
        model,
        trace,
        steps,
        val_accuracy,
        selected_epoch,
    })
}

/// `epoch,mean_loss,sum_loss` rows.
pub fn loss_trace_csv(trace: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,mean_loss,sum_loss\n");
    for e in trace {
        let _ = writeln!(out, "{},{},{}", e.epoch, e.mean_loss, e.sum_loss);
    }
    out
}
