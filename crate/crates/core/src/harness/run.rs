//! Per-seed pipeline and multi-seed, multi-condition drivers.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;

use super::config::{
    Condition, ConventionalDa, DataSource, ExperimentConfig, ModelSource, VerbalizerMode,
};
use super::report::{ConditionTable, ParameterSeries, RunReport, SeedRecord, SweepParam};
use crate::augment::{parse_lexicon_json, prompt_da_augment, synonym_substitute, SynonymLexicon};
use crate::corpus::{
    build_vocab_with_reserved, generate_synthetic, kshot_sample, parse_records, records_to_split,
    DataFormat, DatasetSplit, Vocab, TEMPLATE_WORDS,
};
use crate::error::{Error, Result, StageExt};
use crate::inference::evaluate_with;
use crate::model::{load_checkpoint, pretrain, MicroMlm, ModelConfig, PretrainEpoch};
use crate::rng::{derive_seed, Stream};
use crate::template::Template;
use crate::tuning::{prompt_tune_with_validation, tune_with_validation, TuneConfig, Validation};
use crate::verbalizer::{
    parse_verbalizer_text, select_verbalizer, verbalizer_from_words, Verbalizer,
};

/// Everything a run needs that does not depend on the seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub vocab: Vocab,
    pub model: MicroMlm,
    pub pool: DatasetSplit,
    pub test: DatasetSplit,
    /// Synonym lexicon shipped with the synthetic task.
    pub lexicon: Option<BTreeMap<String, Vec<String>>>,
    /// Label words shipped with the synthetic task.
    pub label_words: Option<Vec<Vec<String>>>,
    pub pretrain_trace: Vec<PretrainEpoch>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn build_model(
    source: &ModelSource,
    vocab: &Vocab,
    corpus: &[String],
) -> Result<(MicroMlm, Vec<PretrainEpoch>)> {
    match source {
        ModelSource::Checkpoint { checkpoint, .. } => {
            let model = load_checkpoint(checkpoint)?;
            if model.config.vocab_size != vocab.len() {
                return Err(Error::Config(format!(
                    "checkpoint expects {} tokens but the vocabulary has {}",
                    model.config.vocab_size,
                    vocab.len()
                )));
            }
            Ok((model, Vec::new()))
        }
        ModelSource::Pretrain {
            config,
            pretrain: pcfg,
        } => {
            let config = ModelConfig {
                vocab_size: vocab.len(),
                ..*config
            };
            let model = MicroMlm::initialize(config, pcfg.seed)?;
            pretrain(model, corpus, vocab, pcfg)
        }
    }
}

/// Loads or generates data and loads or pretrains the model.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let checkpoint_vocab = match &cfg.model {
        ModelSource::Checkpoint { vocab, .. } => Some(Vocab::load(vocab).stage("model")?),
        ModelSource::Pretrain { .. } => None,
    };
    match &cfg.data {
        DataSource::Synthetic { spec, seed } => {
            let data = generate_synthetic(spec, *seed).stage("data")?;
            if let Some(v) = &checkpoint_vocab {
                if *v != data.vocab {
                    return Err(Error::Config(
                        "checkpoint vocabulary differs from the synthetic task's".into(),
                    ));
                }
            }
            let (model, pretrain_trace) =
                build_model(&cfg.model, &data.vocab, &data.pretrain_lines).stage("model")?;
            Ok(Prepared {
                vocab: data.vocab,
                model,
                pool: data.task,
                test: data.test,
                lexicon: Some(data.lexicon),
                label_words: Some(data.label_words),
                pretrain_trace,
            })
        }
        DataSource::Files {
            train,
            test,
            format,
            corpus,
        } => {
            let load_records = |path: &Path| -> Result<_> {
                let fmt = match format {
                    Some(f) => *f,
                    None => DataFormat::from_path(path)?,
                };
                parse_records(&read(path)?, fmt)
            };
            let pool_records = load_records(train).stage("data")?;
            let test_records = load_records(test).stage("data")?;
            let corpus_lines: Vec<String> = match corpus {
                Some(p) => read(p)
                    .stage("data")?
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(str::to_string)
                    .collect(),
                None => Vec::new(),
            };
            let vocab = match checkpoint_vocab {
                Some(v) => v,
                None => {
                    if corpus_lines.is_empty() {
                        return Err(Error::Config(
                            "pretraining from file data needs `data.corpus`".into(),
                        ));
                    }
                    let lines: Vec<&str> = corpus_lines
                        .iter()
                        .map(String::as_str)
                        .chain(pool_records.iter().map(|r| r.text.as_str()))
                        .collect();
                    build_vocab_with_reserved(&lines, 1, &TEMPLATE_WORDS).stage("data")?
                }
            };
            let pool = records_to_split(&pool_records, &vocab, &[]).stage("data")?;
            let test = records_to_split(&test_records, &vocab, &pool.label_names).stage("data")?;
            if test.class_count != pool.class_count {
                return Err(Error::Config(format!(
                    "test split has labels not present in the training pool: {:?}",
                    &test.label_names[pool.class_count..]
                )));
            }
            let (model, pretrain_trace) =
                build_model(&cfg.model, &vocab, &corpus_lines).stage("model")?;
            Ok(Prepared {
                vocab,
                model,
                pool,
                test,
                lexicon: None,
                label_words: None,
                pretrain_trace,
            })
        }
    }
}

impl Prepared {
    pub fn template(&self, cfg: &ExperimentConfig) -> Result<Template> {
        Template::new(cfg.template, &self.vocab, self.model.config.max_len)
    }

    /// First `k` words of each class from `path` or the bundled label words.
    pub fn manual_verbalizer(&self, path: Option<&Path>, k: usize) -> Result<Verbalizer> {
        let words = match (path, &self.label_words) {
            (Some(p), _) => parse_verbalizer_text(&read(p)?)?,
            (None, Some(w)) => w.clone(),
            (None, None) => {
                return Err(Error::Config(
                    "manual verbalizer needs a label-word file for file data".into(),
                ))
            }
        };
        if words.len() != self.pool.class_count {
            return Err(Error::Config(format!(
                "label-word file lists {} classes, the data has {}",
                words.len(),
                self.pool.class_count
            )));
        }
        if let Some(short) = words.iter().position(|w| w.len() < k) {
            return Err(Error::Config(format!(
                "class {short} has {} label words, k_y = {k}",
                words[short].len()
            )));
        }
        let truncated: Vec<Vec<String>> = words.iter().map(|w| w[..k].to_vec()).collect();
        verbalizer_from_words(&truncated, &self.vocab)
    }

    pub fn synonym_lexicon(&self, da: &ConventionalDa) -> Result<SynonymLexicon> {
        match (&da.lexicon, &self.lexicon) {
            (Some(p), _) => {
                SynonymLexicon::from_words(&parse_lexicon_json(&read(p)?)?, &self.vocab)
            }
            (None, Some(raw)) => SynonymLexicon::from_words(raw, &self.vocab),
            (None, None) => Err(Error::Config(
                "conventional DA needs a lexicon file for file data".into(),
            )),
        }
    }
}

/// Sample, optionally enlarge by synonym substitution, pick label words,
/// augment, tune and evaluate, all for one seed.
pub fn run_seed(prep: &Prepared, cfg: &ExperimentConfig, seed: u64) -> Result<SeedRecord> {
    let (train, val) = kshot_sample(&prep.pool, cfg.k_shot, derive_seed(seed, Stream::Sampling))
        .stage("sampling")?;
    let template = prep.template(cfg).stage("template")?;

    let enlarged = match &cfg.conventional_da {
        Some(da) => {
            let lex = prep
                .synonym_lexicon(da)
                .stage("conventional augmentation")?;
            synonym_substitute(
                &train,
                &lex,
                da.copies,
                da.rate,
                derive_seed(seed, Stream::Augment),
            )
            .stage("conventional augmentation")?
        }
        None => train.clone(),
    };

    let (verbalizer, search_train_accuracy) = match &cfg.verbalizer {
        VerbalizerMode::Auto => {
            let search = cfg
                .search
                .to_search_config(cfg.k_y, derive_seed(seed, Stream::TieBreak));
            let out = select_verbalizer(&prep.model, &train, &template, &search)
                .stage("verbalizer search")?;
            (out.verbalizer, Some(out.train_accuracy))
        }
        VerbalizerMode::Manual { path } => (
            prep.manual_verbalizer(path.as_deref(), cfg.k_y)
                .stage("verbalizer")?,
            None,
        ),
        VerbalizerMode::Single { path } => (
            prep.manual_verbalizer(path.as_deref(), 1)
                .stage("verbalizer")?,
            None,
        ),
    };

    let tune_cfg = TuneConfig {
        shuffle_seed: derive_seed(seed, Stream::Shuffle),
        ..cfg.tune
    };
    let validation = || {
        cfg.select_on_val.then_some(Validation {
            split: &val,
            template: &template,
            verbalizer: &verbalizer,
        })
    };
    let (outcome, augmented_size) = match cfg.verbalizer {
        VerbalizerMode::Single { .. } => (
            prompt_tune_with_validation(
                &prep.model,
                &enlarged,
                &template,
                &verbalizer,
                &tune_cfg,
                validation(),
            )
            .stage("tuning")?,
            enlarged.len(),
        ),
        _ => {
            let augmented = prompt_da_augment(&enlarged, &verbalizer).stage("augmentation")?;
            let outcome =
                tune_with_validation(&prep.model, &augmented, &template, &tune_cfg, validation())
                    .stage("tuning")?;
            (outcome, augmented.len())
        }
    };

    let accuracy = |split: &DatasetSplit| {
        evaluate_with(
            &outcome.model,
            split,
            &template,
            &verbalizer,
            cfg.aggregation,
        )
        .stage("evaluation")
    };
    Ok(SeedRecord {
        seed,
        train_size: train.len(),
        enlarged_size: enlarged.len(),
        augmented_size,
        verbalizer: verbalizer.word_strings(&prep.vocab),
        search_train_accuracy,
        train_accuracy: accuracy(&train)?,
        val_accuracy: accuracy(&val)?,
        test_accuracy: accuracy(&prep.test)?,
        selected_epoch: outcome.selected_epoch,
        steps: outcome.steps,
        loss_trace: outcome.trace,
    })
}

/// One seed end to end, preparation included.
pub fn run_single(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRecord> {
    cfg.validate()?;
    run_seed(&prepare(cfg)?, cfg, seed)
}

/// Runs every seed against already prepared resources. Seeds run in
/// parallel; records come back in seed-list order.
pub fn run_sweep_prepared(prep: &Prepared, cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    if cfg.seeds.len() < 2 {
        return Err(Error::Config(
            "a sweep needs at least 2 seeds for the standard deviation".into(),
        ));
    }
    let records = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(prep, cfg, s))
        .collect::<Result<Vec<_>>>()?;
    RunReport::from_records(cfg.name.clone(), records)
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    run_sweep_prepared(&prepare(cfg)?, cfg)
}

/// Caches prepared resources by data and model source so conditions that
/// only change the pipeline share one pretrained model.
#[derive(Default)]
pub struct PreparedCache {
    entries: Vec<(String, Prepared)>,
}

impl PreparedCache {
    pub fn get(&mut self, cfg: &ExperimentConfig) -> Result<&Prepared> {
        let key = serde_json::to_string(&(&cfg.data, &cfg.model)).expect("sources serialize");
        let idx = match self.entries.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                self.entries.push((key, prepare(cfg)?));
                self.entries.len() - 1
            }
        };
        Ok(&self.entries[idx].1)
    }
}

/// One sweep per named condition over the base seed list.
pub fn run_conditions(base: &ExperimentConfig, conditions: &[Condition]) -> Result<ConditionTable> {
    run_conditions_cached(base, conditions, &mut PreparedCache::default())
}

pub fn run_conditions_cached(
    base: &ExperimentConfig,
    conditions: &[Condition],
    cache: &mut PreparedCache,
) -> Result<ConditionTable> {
    if conditions.is_empty() {
        return Err(Error::Config("condition list is empty".into()));
    }
    let mut names = BTreeSet::new();
    for c in conditions {
        if !names.insert(c.name.as_str()) {
            return Err(Error::Config(format!(
                "duplicate condition name `{}`",
                c.name
            )));
        }
    }
    let mut cfgs = Vec::with_capacity(conditions.len());
    for c in conditions {
        let mut cfg = base.with_json_overrides(&c.set)?;
        if cfg.seeds != base.seeds {
            return Err(Error::Config(format!(
                "condition `{}` changes the seed list; all conditions share the base seeds",
                c.name
            )));
        }
        cfg.name = c.name.clone();
        cfg.validate()?;
        cfgs.push(cfg);
    }
    let mut reports = Vec::with_capacity(cfgs.len());
    for cfg in &cfgs {
        let prep = cache.get(cfg)?;
        reports.push(run_sweep_prepared(prep, cfg)?);
    }
    Ok(ConditionTable {
        seeds: base.seeds.clone(),
        reports,
    })
}

/// One sweep per value of `param`, all on the base seed list.
pub fn sweep_parameter(
    base: &ExperimentConfig,
    param: SweepParam,
    values: &[usize],
) -> Result<ParameterSeries> {
    if values.is_empty() {
        return Err(Error::Config(format!("no values given for {param}")));
    }
    let mut cache = PreparedCache::default();
    let mut reports = Vec::with_capacity(values.len());
    for &v in values {
        if v == 0 {
            return Err(Error::Config(format!("{param} must be at least 1")));
        }
        let mut cfg = base.clone();
        match param {
            SweepParam::KY => cfg.k_y = v,
            SweepParam::K => cfg.k_shot = v,
        }
        cfg.name = format!("{param}={v}");
        cfg.validate()?;
        let prep = cache.get(&cfg)?;
        reports.push(run_sweep_prepared(prep, &cfg)?);
    }
    Ok(ParameterSeries {
        param,
        values: values.to_vec(),
        seeds: base.seeds.clone(),
        reports,
    })
}
