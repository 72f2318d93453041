//! Multiple-to-one verbalizers: label-word sets per class, found either by
//! automatic search or read from a file.
//!
//! Automatic search scores every vocabulary token by its summed mask-fill
//! probability over a class's training examples, keeps the Top-m per class,
//! enumerates every choice of `k_y` words per class, and ranks those
//! candidates by training accuracy under max-aggregated prediction.

use std::collections::BTreeSet;
use std::path::Path;

use itertools::Itertools;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{DatasetSplit, LabeledExample, TokenId, Vocab};
use crate::error::{Error, Result};
use crate::inference::{argmax_class, evaluate, scores_from_distribution, Aggregation};
use crate::model::MaskedLm;
use crate::rng::rng_from_seed;
use crate::template::Template;

pub const DEFAULT_BUDGET: u128 = 1_000_000;

/// Label words per class, in class-id order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Verbalizer {
    classes: Vec<Vec<TokenId>>,
}

impl Verbalizer {
    /// Every class needs at least one word; words are non-special and
    /// distinct within a class. Classes may share words.
    pub fn new(classes: Vec<Vec<TokenId>>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Empty("verbalizer"));
        }
        for (c, words) in classes.iter().enumerate() {
            if words.is_empty() {
                return Err(Error::Config(format!("class {c} has no label words")));
            }
            if let Some(&w) = words.iter().find(|&&w| Vocab::is_special(w)) {
                return Err(Error::Config(format!(
                    "class {c} uses special token id {w} as a label word"
                )));
            }
            let unique: BTreeSet<_> = words.iter().collect();
            if unique.len() != words.len() {
                return Err(Error::Config(format!("class {c} repeats a label word")));
            }
        }
        Ok(Verbalizer { classes })
    }

    pub fn classes(&self) -> &[Vec<TokenId>] {
        &self.classes
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn words(&self, class: usize) -> &[TokenId] {
        &self.classes[class]
    }

    /// `k_y` when every class has the same number of words.
    pub fn uniform_k(&self) -> Option<usize> {
        let k = self.classes[0].len();
        self.classes.iter().all(|w| w.len() == k).then_some(k)
    }

    pub fn has_cross_class_overlap(&self) -> bool {
        let mut seen = BTreeSet::new();
        for words in &self.classes {
            let class_set: BTreeSet<_> = words.iter().collect();
            for w in class_set {
                if !seen.insert(*w) {
                    return true;
                }
            }
        }
        false
    }

    /// One-to-one verbalizer keeping the first word of each class.
    pub fn first_words(&self) -> Verbalizer {
        Verbalizer {
            classes: self.classes.iter().map(|w| vec![w[0]]).collect(),
        }
    }

    pub fn word_strings(&self, vocab: &Vocab) -> Vec<Vec<String>> {
        self.classes
            .iter()
            .map(|ws| {
                ws.iter()
                    .map(|&w| vocab.token(w).unwrap_or("[unk]").to_string())
                    .collect()
            })
            .collect()
    }

    /// File form: one line per class, comma-separated words.
    pub fn to_text(&self, vocab: &Vocab) -> String {
        let mut out = String::new();
        for words in self.word_strings(vocab) {
            out.push_str(&words.join(","));
            out.push('\n');
        }
        out
    }
}

/// Parses a verbalizer file into per-class word lists. One line per class
/// with comma-separated words; a single line may instead separate classes
/// with `|`. Blank lines are ignored.
pub fn parse_verbalizer_text(text: &str) -> Result<Vec<Vec<String>>> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    let groups: Vec<(usize, &str)> = match lines.as_slice() {
        [(n, only)] if only.contains('|') => only.split('|').map(|g| (*n, g)).collect(),
        _ => lines,
    };
    if groups.is_empty() {
        return Err(Error::parse(1, "verbalizer file has no classes"));
    }
    let mut classes = Vec::with_capacity(groups.len());
    for (lineno, group) in groups {
        if group.contains('|') {
            return Err(Error::parse(
                lineno,
                "`|` is only allowed in single-line files",
            ));
        }
        let mut words = Vec::new();
        for w in group.split(',') {
            let w = w.trim().to_lowercase();
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::parse(lineno, format!("invalid label word {w:?}")));
            }
            words.push(w);
        }
        classes.push(words);
    }
    Ok(classes)
}

/// Resolves word lists against the vocabulary, requiring equal `k_y`.
pub fn verbalizer_from_words(words: &[Vec<String>], vocab: &Vocab) -> Result<Verbalizer> {
    let lens: Vec<usize> = words.iter().map(Vec::len).collect();
    if lens.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::UnequalLengths(lens));
    }
    let mut classes = Vec::with_capacity(words.len());
    for ws in words {
        let mut ids = Vec::with_capacity(ws.len());
        for w in ws {
            let id = vocab.id(w).ok_or_else(|| Error::UnknownWord(w.clone()))?;
            if Vocab::is_special(id) {
                return Err(Error::SpecialWord(w.clone()));
            }
            ids.push(id);
        }
        classes.push(ids);
    }
    Verbalizer::new(classes)
}

pub fn manual_verbalizer_from_text(text: &str, vocab: &Vocab) -> Result<Verbalizer> {
    verbalizer_from_words(&parse_verbalizer_text(text)?, vocab)
}

pub fn load_manual_verbalizer(path: &Path, vocab: &Vocab) -> Result<Verbalizer> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    manual_verbalizer_from_text(&text, vocab)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreSpace {
    /// Sum of raw mask-fill probabilities.
    #[default]
    Probability,
    /// Sum of log probabilities.
    LogProbability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Candidates kept per class.
    pub m: usize,
    /// Shortlist size; ties at the best accuracy inside it are broken at random.
    pub n: usize,
    pub k_y: usize,
    pub seed: u64,
    pub budget: u128,
    pub score_space: ScoreSpace,
    /// Skip candidates that reuse a word across classes.
    pub strict: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            m: 6,
            n: 1,
            k_y: 3,
            seed: 0,
            budget: DEFAULT_BUDGET,
            score_space: ScoreSpace::Probability,
            strict: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k_y == 0 || self.n == 0 {
            return Err(Error::Config("m, n and k_y must be at least 1".into()));
        }
        if self.k_y > self.m {
            return Err(Error::Config(format!(
                "k_y = {} exceeds m = {}",
                self.k_y, self.m
            )));
        }
        Ok(())
    }
}

/// Top-m tokens for one class with their aggregate scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub tokens: Vec<TokenId>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub classes: Vec<CandidateList>,
}

/// Aggregate mask-fill score of every vocabulary token over one class's
/// examples. Specials and the template's own words score `-inf`.
pub fn candidate_scores<M: MaskedLm + ?Sized>(
    model: &M,
    examples: &[&LabeledExample],
    template: &Template,
    space: ScoreSpace,
) -> Result<Vec<f64>> {
    let first = examples.first().ok_or(Error::Empty("class example set"))?;
    if examples.iter().any(|e| e.class_id != first.class_id) {
        return Err(Error::Config(
            "candidate scoring expects examples of a single class".into(),
        ));
    }
    let dists: Vec<Vec<f64>> = examples
        .par_iter()
        .map(|ex| {
            let (input, pos) = template.apply(&ex.token_ids)?;
            model.mask_distribution(&input, pos)
        })
        .collect::<Result<_>>()?;
    let mut scores = vec![0.0; model.vocab_size()];
    for dist in &dists {
        for (s, &p) in scores.iter_mut().zip(dist) {
            *s += match space {
                ScoreSpace::Probability => p,
                ScoreSpace::LogProbability => p.ln(),
            };
        }
    }
    for s in scores.iter_mut().take(crate::corpus::SPECIAL_COUNT) {
        *s = f64::NEG_INFINITY;
    }
    for t in template.context_tokens() {
        if let Some(s) = scores.get_mut(t) {
            *s = f64::NEG_INFINITY;
        }
    }
    Ok(scores)
}

/// The `m` highest finite scores; equal scores are ordered by ascending id.
pub fn top_m(scores: &[f64], m: usize) -> Result<CandidateList> {
    let mut eligible: Vec<(TokenId, f64)> = scores
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, s)| *s != f64::NEG_INFINITY && !s.is_nan())
        .collect();
    if eligible.len() < m {
        return Err(Error::MTooLarge {
            requested: m,
            available: eligible.len(),
        });
    }
    eligible.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    eligible.truncate(m);
    Ok(CandidateList {
        tokens: eligible.iter().map(|e| e.0).collect(),
        scores: eligible.iter().map(|e| e.1).collect(),
    })
}

pub fn build_candidates<M: MaskedLm + ?Sized>(
    model: &M,
    train: &DatasetSplit,
    template: &Template,
    m: usize,
    space: ScoreSpace,
) -> Result<CandidateSet> {
    let mut classes = Vec::with_capacity(train.class_count);
    for class in 0..train.class_count {
        let examples: Vec<&LabeledExample> = train.class_examples(class).collect();
        if examples.is_empty() {
            return Err(Error::EmptyClass(class));
        }
        let scores = candidate_scores(model, &examples, template, space)?;
        classes.push(top_m(&scores, m)?);
    }
    Ok(CandidateSet { classes })
}

/// `C(m, k)^classes`, or `None` on overflow.
pub fn candidate_count(m: usize, k: usize, classes: usize) -> Option<u128> {
    if k > m {
        return Some(0);
    }
    let k = k.min(m - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.checked_mul((m - i) as u128)? / (i as u128 + 1);
    }
    c.checked_pow(classes as u32)
}

/// Every verbalizer choosing `k_y` words per class from the candidate lists,
/// in lexicographic order (class 0 most significant, combinations in
/// candidate-list order).
pub fn enumerate_verbalizers(
    cands: &CandidateSet,
    k_y: usize,
    budget: u128,
) -> Result<impl Iterator<Item = Verbalizer> + '_> {
    if cands.classes.is_empty() {
        return Err(Error::Empty("candidate set"));
    }
    let m = cands
        .classes
        .iter()
        .map(|c| c.tokens.len())
        .min()
        .unwrap_or(0);
    if k_y == 0 || k_y > m {
        return Err(Error::Config(format!("k_y = {k_y} must lie in 1..={m}")));
    }
    let size = cands
        .classes
        .iter()
        .try_fold(1u128, |acc, c| {
            acc.checked_mul(candidate_count(c.tokens.len(), k_y, 1)?)
        })
        .unwrap_or(u128::MAX);
    if size > budget {
        return Err(Error::Budget { size, budget });
    }
    Ok(cands
        .classes
        .iter()
        .map(|c| c.tokens.iter().copied().combinations(k_y))
        .multi_cartesian_product()
        .map(|classes| Verbalizer { classes }))
}

/// Fraction of `train` predicted correctly with this verbalizer.
pub fn train_accuracy<M: MaskedLm + ?Sized>(
    model: &M,
    verbalizer: &Verbalizer,
    train: &DatasetSplit,
    template: &Template,
) -> Result<f64> {
    evaluate(model, train, template, verbalizer)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortlistEntry {
    pub verbalizer: Verbalizer,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub verbalizer: Verbalizer,
    pub train_accuracy: f64,
    pub candidates: CandidateSet,
    /// Number of verbalizers scored.
    pub evaluated: usize,
    pub shortlist: Vec<ShortlistEntry>,
    /// Shortlist members tied at the best accuracy.
    pub tied: usize,
}

/// Full automatic search: candidate scoring, Top-m, enumeration and
/// accuracy-ranked selection.
pub fn select_verbalizer<M: MaskedLm + ?Sized>(
    model: &M,
    train: &DatasetSplit,
    template: &Template,
    cfg: &SearchConfig,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let cands = build_candidates(model, train, template, cfg.m, cfg.score_space)?;
    select_from_candidates(model, train, template, cands, cfg)
}

/// Ranks every verbalizer over `cands` by training accuracy, keeps the top
/// `n` (stable in enumeration order), and picks uniformly at random with
/// `cfg.seed` among those tied at the best accuracy.
pub fn select_from_candidates<M: MaskedLm + ?Sized>(
    model: &M,
    train: &DatasetSplit,
    template: &Template,
    cands: CandidateSet,
    cfg: &SearchConfig,
) -> Result<SearchOutcome> {
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let dists: Vec<Vec<f64>> = train
        .examples
        .par_iter()
        .map(|ex| {
            let (input, pos) = template.apply(&ex.token_ids)?;
            model.mask_distribution(&input, pos)
        })
        .collect::<Result<_>>()?;

    let mut ranked: Vec<(usize, usize)> = Vec::new();
    for (idx, verb) in enumerate_verbalizers(&cands, cfg.k_y, cfg.budget)?.enumerate() {
        if cfg.strict && verb.has_cross_class_overlap() {
            continue;
        }
        let correct = dists
            .iter()
            .zip(&train.examples)
            .filter(|(d, ex)| {
                let s = scores_from_distribution(d, &verb, Aggregation::Max);
                argmax_class(&s.class_scores) == ex.class_id
            })
            .count();
        ranked.push((idx, correct));
    }
    if ranked.is_empty() {
        return Err(Error::Config(
            "no admissible verbalizer (strict mode rejected every candidate)".into(),
        ));
    }
    let evaluated = ranked.len();
    ranked.sort_by_key(|r| std::cmp::Reverse(r.1));
    ranked.truncate(cfg.n);
    let best = ranked[0].1;
    let tied = ranked.iter().filter(|r| r.1 == best).count();
    let pick = if tied > 1 {
        rng_from_seed(cfg.seed).gen_range(0..tied)
    } else {
        0
    };

    let wanted: BTreeSet<usize> = ranked.iter().map(|r| r.0).collect();
    let mut found: Vec<(usize, Verbalizer)> = enumerate_verbalizers(&cands, cfg.k_y, cfg.budget)?
        .enumerate()
        .filter(|(i, _)| wanted.contains(i))
        .collect();
    let n = train.len() as f64;
    let shortlist: Vec<ShortlistEntry> = ranked
        .iter()
        .map(|&(idx, correct)| {
            let pos = found
                .iter()
                .position(|(i, _)| *i == idx)
                .expect("re-enumerated");
            ShortlistEntry {
                verbalizer: found[pos].1.clone(),
                correct,
                accuracy: correct as f64 / n,
            }
        })
        .collect();
    found.clear();

    Ok(SearchOutcome {
        verbalizer: shortlist[pick].verbalizer.clone(),
        train_accuracy: shortlist[pick].accuracy,
        candidates: cands,
        evaluated,
        shortlist,
        tied,
    })
}

/// JSON sidecar written next to a searched verbalizer file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub k_y: usize,
    pub m: usize,
    pub n: usize,
    pub train_accuracy: f64,
    pub evaluated: usize,
    pub tied: usize,
    pub classes: Vec<ClassReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: usize,
    pub label: String,
    pub words: Vec<String>,
    pub candidates: Vec<(String, f64)>,
}

impl SearchOutcome {
    pub fn report(
        &self,
        vocab: &Vocab,
        label_names: &[String],
        cfg: &SearchConfig,
    ) -> SearchReport {
        let words = self.verbalizer.word_strings(vocab);
        let classes = self
            .candidates
            .classes
            .iter()
            .enumerate()
            .map(|(c, list)| ClassReport {
                class: c,
                label: label_names.get(c).cloned().unwrap_or_else(|| c.to_string()),
                words: words[c].clone(),
                candidates: list
                    .tokens
                    .iter()
                    .zip(&list.scores)
                    .map(|(&t, &s)| (vocab.token(t).unwrap_or("[unk]").to_string(), s))
                    .collect(),
            })
            .collect();
        SearchReport {
            k_y: cfg.k_y,
            m: cfg.m,
            n: cfg.n,
            train_accuracy: self.train_accuracy,
            evaluated: self.evaluated,
            tied: self.tied,
            classes,
        }
    }
}
