//! Synthetic sentiment-like tasks for desk-scale experiments.
//!
//! Sentences are filler words sprinkled with class cue words. The pretraining
//! corpus additionally ends some sentences with `it is <cue>`, where the cue
//! belongs to the sentence's class, so a small masked LM learns to fill the
//! manual template's mask with class-indicative words.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{DatasetSplit, LabeledExample};
use super::vocab::{build_vocab_with_reserved, Vocab, TEMPLATE_WORDS};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, SplitMix64, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub class_count: usize,
    pub class_names: Vec<String>,
    /// Cue words per class; only the first `redundancy` of each list are used.
    pub cue_words: Vec<Vec<String>>,
    pub filler_words: Vec<String>,
    /// Word-level synonym pairs among filler words, used for the lexicon.
    pub filler_synonyms: Vec<[String; 2]>,
    /// Inclusive sentence length range, cues included.
    pub sentence_len: [usize; 2],
    /// Inclusive range of cue words per sentence.
    pub cues_per_sentence: [usize; 2],
    /// Probability that a cue word comes from the sentence's own class.
    pub cue_purity: f64,
    /// Number of distinct class-indicative tokens per class.
    pub redundancy: usize,
    pub corpus_size: usize,
    /// Fraction of pretraining lines that end with `it is <cue>`.
    pub prompt_rate: f64,
    /// Probability that a completion repeats a cue of the sentence's own
    /// class that already occurs in the sentence, when there is one.
    pub echo_rate: f64,
    pub pool_per_class: usize,
    pub test_per_class: usize,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            class_count: 2,
            class_names: words(&["positive", "negative"]),
            cue_words: vec![
                words(&["good", "great", "nice", "fine", "superb", "lovely"]),
                words(&["bad", "awful", "poor", "dull", "boring", "terrible"]),
            ],
            filler_words: words(&[
                "the", "a", "movie", "film", "plot", "story", "actor", "scene", "was", "and",
                "with", "this", "that", "very", "quite", "ending", "music", "cast", "script",
                "show", "director", "of", "in", "some", "long", "old", "new", "time", "about",
                "really",
            ]),
            filler_synonyms: vec![
                ["movie".into(), "film".into()],
                ["plot".into(), "story".into()],
                ["very".into(), "really".into()],
                ["scene".into(), "show".into()],
            ],
            sentence_len: [4, 10],
            cues_per_sentence: [1, 3],
            cue_purity: 0.85,
            redundancy: 4,
            corpus_size: 3000,
            prompt_rate: 0.8,
            echo_rate: 0.9,
            pool_per_class: 64,
            test_per_class: 200,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.class_count < 2 {
            return bad("synthetic tasks need at least two classes".into());
        }
        if self.cue_words.len() != self.class_count || self.class_names.len() != self.class_count {
            return bad("cue_words and class_names must have one entry per class".into());
        }
        if self.redundancy == 0 {
            return bad("redundancy must be at least 1".into());
        }
        for (c, cues) in self.cue_words.iter().enumerate() {
            if cues.len() < self.redundancy {
                return bad(format!(
                    "class {c} has {} cue words, fewer than redundancy {}",
                    cues.len(),
                    self.redundancy
                ));
            }
        }
        let mut seen = BTreeMap::new();
        for (c, cues) in self.cue_words.iter().enumerate() {
            for w in cues {
                if let Some(prev) = seen.insert(w.to_lowercase(), c) {
                    if prev != c {
                        return bad(format!("cue word `{w}` appears in classes {prev} and {c}"));
                    }
                    return bad(format!("cue word `{w}` repeated in class {c}"));
                }
            }
        }
        for w in &self.filler_words {
            if seen.contains_key(&w.to_lowercase()) {
                return bad(format!("filler word `{w}` is also a cue word"));
            }
        }
        if self.filler_words.is_empty() {
            return bad("filler_words is empty".into());
        }
        for w in self
            .filler_words
            .iter()
            .chain(self.cue_words.iter().flatten())
        {
            if TEMPLATE_WORDS.contains(&w.to_lowercase().as_str()) {
                return bad(format!("`{w}` is reserved for the prompt template"));
            }
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return bad(format!("invalid word {w:?}"));
            }
        }
        let [lo, hi] = self.sentence_len;
        let [cue_lo, cue_hi] = self.cues_per_sentence;
        if lo == 0 || lo > hi || cue_lo == 0 || cue_lo > cue_hi || cue_hi > lo {
            return bad("need 1 ≤ cues_per_sentence ≤ sentence_len, with ordered ranges".into());
        }
        let unit = 0.0..=1.0;
        if ![self.cue_purity, self.prompt_rate, self.echo_rate]
            .iter()
            .all(|p| unit.contains(p))
        {
            return bad("cue_purity, prompt_rate and echo_rate must lie in [0, 1]".into());
        }
        if self.corpus_size == 0 || self.pool_per_class == 0 || self.test_per_class == 0 {
            return bad("corpus_size, pool_per_class and test_per_class must be positive".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SyntheticSpec =
            serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// The cue words actually in use for each class.
    pub fn active_cues(&self) -> Vec<Vec<String>> {
        self.cue_words
            .iter()
            .map(|c| {
                c[..self.redundancy]
                    .iter()
                    .map(|w| w.to_lowercase())
                    .collect()
            })
            .collect()
    }

    /// Synonym lexicon: each active cue maps to the other active cues of its
    /// class, and filler synonym pairs map to each other.
    pub fn lexicon(&self) -> BTreeMap<String, Vec<String>> {
        let mut lex: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for cues in self.active_cues() {
            for w in &cues {
                let subs: Vec<String> = cues.iter().filter(|o| *o != w).cloned().collect();
                if !subs.is_empty() {
                    lex.insert(w.clone(), subs);
                }
            }
        }
        for [a, b] in &self.filler_synonyms {
            let (a, b) = (a.to_lowercase(), b.to_lowercase());
            if a != b {
                lex.entry(a.clone()).or_default().push(b.clone());
                lex.entry(b).or_default().push(a);
            }
        }
        for subs in lex.values_mut() {
            subs.sort();
            subs.dedup();
        }
        lex
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub vocab: Vocab,
    pub pretrain_lines: Vec<String>,
    /// Labeled pool from which K-shot splits are drawn.
    pub task: DatasetSplit,
    /// Held-out evaluation split with the same class mapping.
    pub test: DatasetSplit,
    pub lexicon: BTreeMap<String, Vec<String>>,
    /// Active cue words per class, usable as manual label words.
    pub label_words: Vec<Vec<String>>,
}

impl SyntheticData {
    /// Writes `corpus.txt`, `train.jsonl`, `test.jsonl`, `lexicon.json`,
    /// `manual_verbalizer.txt` and `vocab.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, body: String| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
        };
        write("corpus.txt", self.pretrain_lines.join("\n") + "\n")?;
        write("train.jsonl", self.task.to_jsonl(&self.vocab))?;
        write("test.jsonl", self.test.to_jsonl(&self.vocab))?;
        write(
            "lexicon.json",
            serde_json::to_string_pretty(&self.lexicon).expect("lexicon serializes") + "\n",
        )?;
        let manual: Vec<String> = self.label_words.iter().map(|w| w.join(",")).collect();
        write("manual_verbalizer.txt", manual.join("\n") + "\n")?;
        write("vocab.txt", self.vocab.to_text())
    }
}

struct Sampler<'a> {
    spec: &'a SyntheticSpec,
    cues: Vec<Vec<String>>,
    fillers: Vec<String>,
}

impl Sampler<'_> {
    fn sentence(&self, class: usize, rng: &mut SplitMix64) -> Vec<String> {
        let [lo, hi] = self.spec.sentence_len;
        let [cue_lo, cue_hi] = self.spec.cues_per_sentence;
        let len = rng.gen_range(lo..=hi);
        let n_cues = rng.gen_range(cue_lo..=cue_hi);
        let mut words: Vec<String> = (0..len)
            .map(|_| self.fillers.choose(rng).expect("fillers nonempty").clone())
            .collect();
        let positions = rand::seq::index::sample(rng, len, n_cues).into_vec();
        for pos in positions {
            let from = if rng.gen::<f64>() < self.spec.cue_purity {
                class
            } else {
                let other = rng.gen_range(0..self.spec.class_count - 1);
                if other >= class {
                    other + 1
                } else {
                    other
                }
            };
            words[pos] = self.cues[from].choose(rng).expect("cues nonempty").clone();
        }
        words
    }
}

/// Generates a pretraining corpus, a labeled pool and a test split.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticData> {
    spec.validate()?;
    let sampler = Sampler {
        spec,
        cues: spec.active_cues(),
        fillers: spec.filler_words.iter().map(|w| w.to_lowercase()).collect(),
    };
    let mut rng = rng_from_seed(derive_seed(seed, Stream::Synthetic));

    let forced: Vec<(usize, String)> = sampler
        .cues
        .iter()
        .enumerate()
        .flat_map(|(c, ws)| ws.iter().map(move |w| (c, w.clone())))
        .collect();
    let mut pretrain_lines = Vec::with_capacity(spec.corpus_size);
    for i in 0..spec.corpus_size {
        let (class, forced_word) = match forced.get(i) {
            Some((c, w)) => (*c, Some(w.clone())),
            None => (rng.gen_range(0..spec.class_count), None),
        };
        let mut words = sampler.sentence(class, &mut rng);
        if forced_word.is_some() || rng.gen::<f64>() < spec.prompt_rate {
            let label = forced_word.unwrap_or_else(|| {
                let own: Vec<&String> = words
                    .iter()
                    .filter(|w| sampler.cues[class].contains(w))
                    .collect();
                if !own.is_empty() && rng.gen::<f64>() < spec.echo_rate {
                    own.choose(&mut rng).expect("nonempty").to_string()
                } else {
                    sampler.cues[class].choose(&mut rng).expect("cues").clone()
                }
            });
            words.extend([
                TEMPLATE_WORDS[0].to_string(),
                TEMPLATE_WORDS[1].to_string(),
                label,
            ]);
        }
        pretrain_lines.push(words.join(" "));
    }

    let mut task_text = Vec::new();
    let mut test_text = Vec::new();
    for (per_class, out) in [
        (spec.pool_per_class, &mut task_text),
        (spec.test_per_class, &mut test_text),
    ] {
        for i in 0..per_class * spec.class_count {
            let class = i % spec.class_count;
            out.push((sampler.sentence(class, &mut rng).join(" "), class));
        }
    }

    let mut all_lines: Vec<&str> = pretrain_lines.iter().map(String::as_str).collect();
    all_lines.extend(task_text.iter().chain(&test_text).map(|(t, _)| t.as_str()));
    let vocab = build_vocab_with_reserved(&all_lines, 1, &TEMPLATE_WORDS)?;

    let names: Vec<String> = spec.class_names.clone();
    let to_split = |rows: &[(String, usize)]| {
        let examples = rows
            .iter()
            .map(|(t, c)| LabeledExample {
                token_ids: vocab.tokenize(t),
                class_id: *c,
            })
            .collect();
        DatasetSplit::new(examples, names.clone())
    };
    let task = to_split(&task_text)?;
    let test = to_split(&test_text)?;

    Ok(SyntheticData {
        lexicon: spec.lexicon(),
        label_words: sampler.cues.clone(),
        vocab,
        pretrain_lines,
        task,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            corpus_size: 1000,
            redundancy: 3,
            pool_per_class: 10,
            test_per_class: 10,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn corpus_size_and_cue_coverage() {
        let data = generate_synthetic(&small(), 1).unwrap();
        assert_eq!(data.pretrain_lines.len(), 1000);
        for cues in &data.label_words {
            assert_eq!(cues.len(), 3);
            for cue in cues {
                assert!(data
                    .pretrain_lines
                    .iter()
                    .any(|l| l.split(' ').any(|w| w == cue)));
            }
        }
        assert_eq!(data.task.class_counts(), vec![10, 10]);
    }

    #[test]
    fn vocab_size_matches_distinct_tokens() {
        let data = generate_synthetic(&small(), 2).unwrap();
        let mut distinct = BTreeSet::new();
        for l in data.pretrain_lines.iter() {
            distinct.extend(l.split_whitespace().map(str::to_string));
        }
        for ex in data.task.examples.iter().chain(&data.test.examples) {
            distinct.extend(
                ex.token_ids
                    .iter()
                    .map(|&t| data.vocab.token(t).unwrap().to_string()),
            );
        }
        for w in TEMPLATE_WORDS {
            distinct.insert(w.to_string());
        }
        assert_eq!(data.vocab.len(), 3 + distinct.len());
    }

    #[test]
    fn seeds_differ_but_share_domain() {
        let a = generate_synthetic(&small(), 1).unwrap();
        let b = generate_synthetic(&small(), 2).unwrap();
        let mut la = a.pretrain_lines.clone();
        let mut lb = b.pretrain_lines.clone();
        la.sort();
        lb.sort();
        assert_ne!(la, lb);
        let wa: BTreeSet<&str> = la.iter().flat_map(|l| l.split(' ')).collect();
        let wb: BTreeSet<&str> = lb.iter().flat_map(|l| l.split(' ')).collect();
        let domain: BTreeSet<String> = small()
            .filler_words
            .iter()
            .chain(small().active_cues().iter().flatten())
            .cloned()
            .chain(TEMPLATE_WORDS.iter().map(|s| s.to_string()))
            .collect();
        assert!(wa.iter().all(|w| domain.contains(*w)));
        assert!(wb.iter().all(|w| domain.contains(*w)));
    }

    #[test]
    fn deterministic() {
        let a = generate_synthetic(&small(), 5).unwrap();
        let b = generate_synthetic(&small(), 5).unwrap();
        assert_eq!(a.pretrain_lines, b.pretrain_lines);
        assert_eq!(a.task, b.task);
    }

    #[test]
    fn rejects_overlapping_cues() {
        let mut spec = small();
        spec.cue_words[1][0] = "good".into();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn lexicon_is_within_class() {
        let lex = small().lexicon();
        assert_eq!(lex["good"], vec!["great", "nice"]);
        assert_eq!(lex["movie"], vec!["film"]);
        assert!(lex.iter().all(|(k, v)| !v.contains(k)));
    }
}
