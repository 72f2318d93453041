//! Declarative experiment description and dotted-path overrides.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{DataFormat, SyntheticSpec};
use crate::error::{Error, Result};
use crate::inference::Aggregation;
use crate::model::{ModelConfig, PretrainConfig};
use crate::template::TemplateMode;
use crate::tuning::TuneConfig;
use crate::verbalizer::{ScoreSpace, SearchConfig};

pub const DEFAULT_SEEDS: [u64; 5] = [13, 21, 42, 87, 100];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    Synthetic {
        #[serde(default)]
        spec: SyntheticSpec,
        #[serde(default)]
        seed: u64,
    },
    Files {
        /// Labeled pool that K-shot splits are drawn from.
        train: PathBuf,
        test: PathBuf,
        /// Inferred from the file extension when absent.
        #[serde(default)]
        format: Option<DataFormat>,
        /// Unlabeled text for pretraining, one sentence per line.
        #[serde(default)]
        corpus: Option<PathBuf>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            spec: SyntheticSpec::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSource {
    Checkpoint {
        checkpoint: PathBuf,
        vocab: PathBuf,
    },
    /// `config.vocab_size` is taken from the vocabulary.
    Pretrain {
        #[serde(default)]
        config: ModelConfig,
        #[serde(default)]
        pretrain: PretrainConfig,
    },
}

impl Default for ModelSource {
    fn default() -> Self {
        ModelSource::Pretrain {
            config: ModelConfig::default(),
            pretrain: PretrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum VerbalizerMode {
    /// Searched on each seed's training split.
    #[default]
    Auto,
    /// First `k_y` words of each class from a label-word file, or from the
    /// synthetic task's cue words when no path is given.
    Manual {
        #[serde(default)]
        path: Option<PathBuf>,
    },
    /// One word per class, trained through the standard prompt-tuning path.
    Single {
        #[serde(default)]
        path: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConventionalDa {
    /// Total copies of the training split, originals included.
    pub copies: usize,
    pub rate: f64,
    /// Lexicon file; the synthetic task's lexicon when absent.
    pub lexicon: Option<PathBuf>,
}

impl Default for ConventionalDa {
    fn default() -> Self {
        ConventionalDa {
            copies: 2,
            rate: 0.3,
            lexicon: None,
        }
    }
}

/// Search knobs; `k_y` and the tie-break seed come from the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSettings {
    pub m: usize,
    pub n: usize,
    pub budget: u64,
    pub score_space: ScoreSpace,
    pub strict: bool,
}

impl Default for SearchSettings {
    fn default() -> Self {
        let d = SearchConfig::default();
        SearchSettings {
            m: d.m,
            n: d.n,
            budget: d.budget as u64,
            score_space: d.score_space,
            strict: d.strict,
        }
    }
}

impl SearchSettings {
    pub fn to_search_config(&self, k_y: usize, seed: u64) -> SearchConfig {
        SearchConfig {
            m: self.m,
            n: self.n,
            k_y,
            seed,
            budget: u128::from(self.budget),
            score_space: self.score_space,
            strict: self.strict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub data: DataSource,
    pub model: ModelSource,
    pub k_shot: usize,
    pub seeds: Vec<u64>,
    pub template: TemplateMode,
    pub verbalizer: VerbalizerMode,
    pub k_y: usize,
    pub search: SearchSettings,
    /// `shuffle_seed` is replaced per seed by the shuffle stream.
    pub tune: TuneConfig,
    pub conventional_da: Option<ConventionalDa>,
    /// Keep the epoch with the best validation accuracy.
    pub select_on_val: bool,
    pub aggregation: Aggregation,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            data: DataSource::default(),
            model: ModelSource::default(),
            k_shot: 8,
            seeds: DEFAULT_SEEDS.to_vec(),
            template: TemplateMode::Manual,
            verbalizer: VerbalizerMode::Auto,
            k_y: 3,
            search: SearchSettings::default(),
            tune: TuneConfig::default(),
            conventional_da: None,
            select_on_val: false,
            aggregation: Aggregation::Max,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Returns a copy with every `key=value` override applied. Keys are
    /// dotted paths into the JSON form; values are parsed as JSON and fall
    /// back to plain strings.
    pub fn with_overrides<K: AsRef<str>, V: AsRef<str>>(
        &self,
        overrides: &[(K, V)],
    ) -> Result<Self> {
        let mut value = serde_json::to_value(self).expect("config serializes");
        for (k, v) in overrides {
            set_path(&mut value, k.as_ref(), parse_value(v.as_ref()))?;
        }
        from_value(value)
    }

    /// Same as [`with_overrides`](Self::with_overrides) with values already in JSON form.
    pub fn with_json_overrides(&self, overrides: &serde_json::Map<String, Value>) -> Result<Self> {
        let mut value = serde_json::to_value(self).expect("config serializes");
        for (k, v) in overrides {
            set_path(&mut value, k, v.clone())?;
        }
        from_value(value)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        let distinct: BTreeSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::Config("seed list contains duplicates".into()));
        }
        if self.k_shot == 0 {
            return Err(Error::Config("k_shot must be at least 1".into()));
        }
        if self.k_y == 0 {
            return Err(Error::Config("k_y must be at least 1".into()));
        }
        match self.verbalizer {
            VerbalizerMode::Auto => self.search.to_search_config(self.k_y, 0).validate()?,
            VerbalizerMode::Single { .. } if self.k_y != 1 => {
                return Err(Error::Config(format!(
                    "single-word verbalizer needs k_y = 1, got {}",
                    self.k_y
                )))
            }
            _ => {}
        }
        if let Some(da) = &self.conventional_da {
            if da.copies == 0 || !(0.0..=1.0).contains(&da.rate) {
                return Err(Error::Config(
                    "conventional DA needs copies >= 1 and rate in [0, 1]".into(),
                ));
            }
        }
        if let ModelSource::Pretrain { config, pretrain } = &self.model {
            ModelConfig {
                vocab_size: config.vocab_size.max(1),
                ..*config
            }
            .validate()?;
            pretrain.adam.validate()?;
        }
        self.tune.validate()
    }
}

fn from_value(value: Value) -> Result<ExperimentConfig> {
    serde_json::from_value(value).map_err(|e| Error::Config(format!("invalid override: {e}")))
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key `{key}`")));
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        node = match node {
            Value::Object(map) => map.entry(part.to_string()).or_insert(Value::Null),
            _ => {
                return Err(Error::Config(format!(
                    "override key `{key}` goes through a non-object"
                )))
            }
        };
    }
    if node.is_null() {
        *node = Value::Object(Default::default());
    }
    match node {
        Value::Object(map) => {
            map.insert(parts[parts.len() - 1].to_string(), value);
            Ok(())
        }
        _ => Err(Error::Config(format!(
            "override key `{key}` goes through a non-object"
        ))),
    }
}

/// A named set of overrides applied to a base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub name: String,
    #[serde(default)]
    pub set: serde_json::Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionsFile {
    pub conditions: Vec<Condition>,
}

impl ConditionsFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ConditionsFile::from_json(&text)
    }
}
