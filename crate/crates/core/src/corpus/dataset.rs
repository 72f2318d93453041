use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::vocab::{TokenId, Vocab, MASK_ID, PAD_ID};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// One tokenized input and its dense class id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub token_ids: Vec<TokenId>,
    pub class_id: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub examples: Vec<LabeledExample>,
    pub class_count: usize,
    /// Original label strings, indexed by class id.
    pub label_names: Vec<String>,
}

impl DatasetSplit {
    pub fn new(examples: Vec<LabeledExample>, label_names: Vec<String>) -> Result<Self> {
        let class_count = label_names.len();
        for (i, ex) in examples.iter().enumerate() {
            if ex.class_id >= class_count {
                return Err(Error::Config(format!(
                    "example {i} has class {} but only {class_count} classes exist",
                    ex.class_id
                )));
            }
            if ex.token_ids.iter().any(|&t| t == MASK_ID || t == PAD_ID) {
                return Err(Error::Config(format!(
                    "example {i} contains a mask or padding token"
                )));
            }
        }
        Ok(DatasetSplit {
            examples,
            class_count,
            label_names,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn class_examples(&self, class: usize) -> impl Iterator<Item = &LabeledExample> {
        self.examples.iter().filter(move |e| e.class_id == class)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for e in &self.examples {
            counts[e.class_id] += 1;
        }
        counts
    }

    pub fn with_examples(&self, examples: Vec<LabeledExample>) -> Self {
        DatasetSplit {
            examples,
            class_count: self.class_count,
            label_names: self.label_names.clone(),
        }
    }

    /// Serializes as JSONL with detokenized text and the original label names.
    pub fn to_jsonl(&self, vocab: &Vocab) -> String {
        let mut out = String::new();
        for ex in &self.examples {
            let rec = RawRecord {
                text: vocab.detokenize(&ex.token_ids),
                label: self.label_names[ex.class_id].clone(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save_jsonl(&self, vocab: &Vocab, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl(vocab)).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Jsonl,
    Tsv,
}

impl DataFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) => ext.parse(),
            None => Err(Error::UnknownFormat(path.display().to_string())),
        }
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(DataFormat::Jsonl),
            "tsv" => Ok(DataFormat::Tsv),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataFormat::Jsonl => "jsonl",
            DataFormat::Tsv => "tsv",
        })
    }
}

/// An untokenized record as it appears on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub text: String,
    pub label: String,
}

/// Parses dataset text into raw records. Blank lines are skipped; line
/// numbers in errors are 1-based.
pub fn parse_records(input: &str, format: DataFormat) -> Result<Vec<RawRecord>> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec = match format {
            DataFormat::Jsonl => parse_jsonl_line(line, lineno)?,
            DataFormat::Tsv => parse_tsv_line(line, lineno)?,
        };
        if rec.text.split_whitespace().next().is_none() {
            return Err(Error::parse(lineno, "empty text"));
        }
        if rec.label.trim().is_empty() {
            return Err(Error::parse(lineno, "empty label"));
        }
        records.push(rec);
    }
    Ok(records)
}

fn parse_jsonl_line(line: &str, lineno: usize) -> Result<RawRecord> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| Error::parse(lineno, e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::parse(lineno, "expected a JSON object"))?;
    let text = obj
        .get("text")
        .and_then(|t| t.as_str())
        .ok_or_else(|| Error::parse(lineno, "missing string field `text`"))?;
    let label = match obj.get("label") {
        Some(serde_json::Value::String(s)) => s.clone(),
        Some(serde_json::Value::Number(n)) => n.to_string(),
        Some(serde_json::Value::Bool(b)) => b.to_string(),
        _ => return Err(Error::parse(lineno, "missing field `label`")),
    };
    Ok(RawRecord {
        text: text.to_string(),
        label,
    })
}

fn parse_tsv_line(line: &str, lineno: usize) -> Result<RawRecord> {
    let mut cols = line.split('\t');
    let text = cols.next().unwrap_or_default();
    let label = cols
        .next()
        .ok_or_else(|| Error::parse(lineno, "missing label column"))?;
    if cols.next().is_some() {
        return Err(Error::parse(
            lineno,
            "expected exactly two tab-separated columns",
        ));
    }
    Ok(RawRecord {
        text: text.to_string(),
        label: label.trim().to_string(),
    })
}

/// Tokenizes records and assigns dense class ids. Labels already present in
/// `known_labels` keep their ids; new labels are appended by first appearance.
pub fn records_to_split(
    records: &[RawRecord],
    vocab: &Vocab,
    known_labels: &[String],
) -> Result<DatasetSplit> {
    let mut label_names: Vec<String> = known_labels.to_vec();
    let mut examples = Vec::with_capacity(records.len());
    for rec in records {
        let class_id = match label_names.iter().position(|l| *l == rec.label) {
            Some(c) => c,
            None => {
                label_names.push(rec.label.clone());
                label_names.len() - 1
            }
        };
        examples.push(LabeledExample {
            token_ids: vocab.tokenize(&rec.text),
            class_id,
        });
    }
    DatasetSplit::new(examples, label_names)
}

pub fn load_dataset(path: &Path, format: DataFormat, vocab: &Vocab) -> Result<DatasetSplit> {
    load_dataset_with_labels(path, format, vocab, &[])
}

pub fn load_dataset_with_labels(
    path: &Path,
    format: DataFormat,
    vocab: &Vocab,
    known_labels: &[String],
) -> Result<DatasetSplit> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records = parse_records(&text, format)?;
    records_to_split(&records, vocab, known_labels)
}

/// Draws `2k` examples per class without replacement; the first `k` go to
/// the training split and the next `k` to the validation split.
pub fn kshot_sample(
    full: &DatasetSplit,
    k: usize,
    seed: u64,
) -> Result<(DatasetSplit, DatasetSplit)> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut train = Vec::with_capacity(k * full.class_count);
    let mut val = Vec::with_capacity(k * full.class_count);
    for class in 0..full.class_count {
        let mut idx: Vec<usize> = full
            .examples
            .iter()
            .enumerate()
            .filter(|(_, e)| e.class_id == class)
            .map(|(i, _)| i)
            .collect();
        if idx.len() < 2 * k {
            return Err(Error::InsufficientExamples {
                class: full
                    .label_names
                    .get(class)
                    .cloned()
                    .unwrap_or_else(|| class.to_string()),
                available: idx.len(),
                required: 2 * k,
            });
        }
        idx.shuffle(&mut rng);
        train.extend(idx[..k].iter().map(|&i| full.examples[i].clone()));
        val.extend(idx[k..2 * k].iter().map(|&i| full.examples[i].clone()));
    }
    Ok((full.with_examples(train), full.with_examples(val)))
}
