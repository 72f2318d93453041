//! Training-set augmentation: instance and label-word pairs and synonym
//! substitution.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DatasetSplit, LabeledExample, TokenId, Vocab};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::verbalizer::Verbalizer;

/// An untemplated input paired with one label word of its class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedExample {
    pub token_ids: Vec<TokenId>,
    pub target_word_id: TokenId,
    /// Index of the source example in the split it came from.
    pub origin: usize,
    pub source_class: usize,
}

/// Expands each `(x, y)` into `(x, v)` for every label word `v` of class `y`,
/// source-major then in label-word order. Inputs are copied unchanged.
pub fn prompt_da_augment(
    train: &DatasetSplit,
    verbalizer: &Verbalizer,
) -> Result<Vec<AugmentedExample>> {
    let mut out = Vec::with_capacity(train.len() * verbalizer.uniform_k().unwrap_or(1));
    for (origin, ex) in train.examples.iter().enumerate() {
        if ex.class_id >= verbalizer.class_count() {
            return Err(Error::MissingClass {
                class: ex.class_id,
                covered: verbalizer.class_count(),
            });
        }
        for &w in verbalizer.words(ex.class_id) {
            out.push(AugmentedExample {
                token_ids: ex.token_ids.clone(),
                target_word_id: w,
                origin,
                source_class: ex.class_id,
            });
        }
    }
    Ok(out)
}

/// Token → substitute tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymLexicon {
    entries: BTreeMap<TokenId, Vec<TokenId>>,
}

/// Parses the lexicon file: a JSON object mapping a token to an array of
/// substitute tokens.
pub fn parse_lexicon_json(text: &str) -> Result<BTreeMap<String, Vec<String>>> {
    serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))
}

impl SynonymLexicon {
    /// Resolves words against `vocab`. Every word must be a known,
    /// non-special token, and no word may list itself.
    pub fn from_words(raw: &BTreeMap<String, Vec<String>>, vocab: &Vocab) -> Result<Self> {
        let resolve = |w: &str| {
            let w = w.to_lowercase();
            match vocab.id(&w) {
                Some(id) if !Vocab::is_special(id) => Ok(id),
                Some(_) => Err(Error::SpecialWord(w)),
                None => Err(Error::UnknownWord(w)),
            }
        };
        let mut entries: BTreeMap<TokenId, Vec<TokenId>> = BTreeMap::new();
        for (key, subs) in raw {
            let k = resolve(key)?;
            let list = entries.entry(k).or_default();
            for s in subs {
                let id = resolve(s)?;
                if id == k {
                    return Err(Error::Config(format!("lexicon maps `{key}` to itself")));
                }
                if !list.contains(&id) {
                    list.push(id);
                }
            }
        }
        entries.retain(|_, v| !v.is_empty());
        Ok(SynonymLexicon { entries })
    }

    pub fn from_json(text: &str, vocab: &Vocab) -> Result<Self> {
        SynonymLexicon::from_words(&parse_lexicon_json(text)?, vocab)
    }

    pub fn load(path: &Path, vocab: &Vocab) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SynonymLexicon::from_json(&text, vocab)
    }

    pub fn substitutes(&self, token: TokenId) -> Option<&[TokenId]> {
        self.entries.get(&token).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Returns the originals followed by `copies - 1` perturbed copies. In each
/// copy every token with a lexicon entry is replaced, with probability
/// `rate`, by a uniformly chosen substitute.
pub fn synonym_substitute(
    train: &DatasetSplit,
    lexicon: &SynonymLexicon,
    copies: usize,
    rate: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if copies == 0 {
        return Err(Error::Config("copies must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "substitution rate {rate} outside [0, 1]"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut examples = Vec::with_capacity(train.len() * copies);
    examples.extend(train.examples.iter().cloned());
    for _ in 1..copies {
        for ex in &train.examples {
            let token_ids = ex
                .token_ids
                .iter()
                .map(|&t| match lexicon.substitutes(t) {
                    Some(subs) if rng.gen::<f64>() < rate => {
                        *subs.choose(&mut rng).expect("entries are nonempty")
                    }
                    _ => t,
                })
                .collect();
            examples.push(LabeledExample {
                token_ids,
                class_id: ex.class_id,
            });
        }
    }
    Ok(train.with_examples(examples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab;
    use proptest::prelude::*;

    fn vocab() -> Vocab {
        build_vocab(&["x good great best bad awful worst movie film"], 1).unwrap()
    }

    fn split(n: usize, classes: usize) -> DatasetSplit {
        let examples = (0..n)
            .map(|i| LabeledExample {
                token_ids: vec![3 + i % 5, 4],
                class_id: i % classes,
            })
            .collect();
        DatasetSplit::new(examples, (0..classes).map(|c| c.to_string()).collect()).unwrap()
    }

    #[test]
    fn one_example_three_words() {
        let v = vocab();
        let ids = |ws: &[&str]| ws.iter().map(|w| v.id(w).unwrap()).collect::<Vec<_>>();
        let verb = Verbalizer::new(vec![
            ids(&["good", "great", "best"]),
            ids(&["bad", "awful", "worst"]),
        ])
        .unwrap();
        let train = DatasetSplit::new(
            vec![LabeledExample {
                token_ids: ids(&["x"]),
                class_id: 0,
            }],
            vec!["pos".into(), "neg".into()],
        )
        .unwrap();
        let aug = prompt_da_augment(&train, &verb).unwrap();
        let targets: Vec<_> = aug
            .iter()
            .map(|a| v.token(a.target_word_id).unwrap())
            .collect();
        assert_eq!(targets, ["good", "great", "best"]);
        assert!(aug
            .iter()
            .all(|a| a.token_ids == ids(&["x"]) && a.origin == 0));
    }

    #[test]
    fn sixteen_examples_times_three() {
        let verb = Verbalizer::new(vec![vec![3, 4, 5], vec![6, 7, 8]]).unwrap();
        assert_eq!(prompt_da_augment(&split(16, 2), &verb).unwrap().len(), 48);
    }

    #[test]
    fn single_word_is_bijective() {
        let verb = Verbalizer::new(vec![vec![5], vec![6]]).unwrap();
        let train = split(10, 2);
        let aug = prompt_da_augment(&train, &verb).unwrap();
        assert_eq!(aug.len(), train.len());
        for (a, ex) in aug.iter().zip(&train.examples) {
            assert_eq!(a.token_ids, ex.token_ids);
            assert_eq!(a.target_word_id, verb.words(ex.class_id)[0]);
        }
    }

    #[test]
    fn missing_class() {
        let verb = Verbalizer::new(vec![vec![5]]).unwrap();
        assert!(matches!(
            prompt_da_augment(&split(4, 2), &verb),
            Err(Error::MissingClass {
                class: 1,
                covered: 1
            })
        ));
    }

    fn lexicon(v: &Vocab) -> SynonymLexicon {
        SynonymLexicon::from_json(r#"{"movie": ["film"], "good": ["great", "best"]}"#, v).unwrap()
    }

    #[test]
    fn doubles_with_originals_first() {
        let v = vocab();
        let train = split(16, 2);
        let out = synonym_substitute(&train, &lexicon(&v), 2, 0.3, 1).unwrap();
        assert_eq!(out.len(), 32);
        assert_eq!(out.examples[..16], train.examples[..]);
        for (a, b) in out.examples[16..].iter().zip(&train.examples) {
            assert_eq!(a.class_id, b.class_id);
        }
    }

    #[test]
    fn rate_zero_and_one() {
        let v = vocab();
        let train = split(16, 2);
        let same = synonym_substitute(&train, &lexicon(&v), 3, 0.0, 4).unwrap();
        assert_eq!(same.examples[16..32], train.examples[..]);
        let movie = v.id("movie").unwrap();
        let one = DatasetSplit::new(
            vec![LabeledExample {
                token_ids: vec![movie],
                class_id: 0,
            }],
            vec!["a".into()],
        )
        .unwrap();
        let out = synonym_substitute(&one, &lexicon(&v), 5, 1.0, 4).unwrap();
        assert!(out.examples[1..]
            .iter()
            .all(|e| e.token_ids == vec![v.id("film").unwrap()]));
    }

    #[test]
    fn lexicon_validation() {
        let v = vocab();
        assert!(matches!(
            SynonymLexicon::from_json(r#"{"movie": ["cinema"]}"#, &v),
            Err(Error::UnknownWord(w)) if w == "cinema"
        ));
        assert!(SynonymLexicon::from_json(r#"{"movie": ["movie"]}"#, &v).is_err());
        assert!(SynonymLexicon::from_json("[1, 2]", &v).is_err());
        assert!(synonym_substitute(&split(2, 1), &lexicon(&v), 0, 0.5, 0).is_err());
    }

    proptest! {
        #[test]
        fn cardinality_is_k_times_n(k in 1usize..=5, n in 1usize..=64, copies in 1usize..=3) {
            let verb = Verbalizer::new(vec![
                (3..3 + k).collect(),
                (20..20 + k).collect(),
            ]).unwrap();
            let train = split(n, 2);
            let aug = prompt_da_augment(&train, &verb).unwrap();
            prop_assert_eq!(aug.len(), k * n);
            for a in &aug {
                prop_assert_eq!(&a.token_ids, &train.examples[a.origin].token_ids);
                prop_assert!(verb.words(a.source_class).contains(&a.target_word_id));
            }
            let v = vocab();
            let enlarged = synonym_substitute(&train, &lexicon(&v), copies, 0.5, 7).unwrap();
            prop_assert_eq!(prompt_da_augment(&enlarged, &verb).unwrap().len(), k * copies * n);
        }
    }
}
