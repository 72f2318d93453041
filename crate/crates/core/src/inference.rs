//! Class scores from label-word probabilities, argmax prediction and
//! split-level evaluation.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{DatasetSplit, TokenId};
use crate::error::{Error, Result};
use crate::model::MaskedLm;
use crate::template::Template;
use crate::verbalizer::Verbalizer;

/// How a class's label-word probabilities collapse into one score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Max,
    /// Ablation only.
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    /// `Pr(y | x)` per class.
    pub class_scores: Vec<f64>,
    /// Mask-fill probability of each label word, grouped by class.
    pub word_probs: Vec<Vec<f64>>,
}

impl ClassScores {
    pub fn predicted(&self) -> usize {
        argmax_class(&self.class_scores)
    }
}

/// Index of the largest score; exact ties go to the lowest class id.
pub fn argmax_class(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn scores_from_distribution(
    dist: &[f64],
    verbalizer: &Verbalizer,
    aggregation: Aggregation,
) -> ClassScores {
    let word_probs: Vec<Vec<f64>> = verbalizer
        .classes()
        .iter()
        .map(|words| words.iter().map(|&w| dist[w]).collect())
        .collect();
    let class_scores = word_probs
        .iter()
        .map(|probs| match aggregation {
            Aggregation::Max => probs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Aggregation::Mean => probs.iter().sum::<f64>() / probs.len() as f64,
        })
        .collect();
    ClassScores {
        class_scores,
        word_probs,
    }
}

fn mask_distribution<M: MaskedLm + ?Sized>(
    model: &M,
    x: &[TokenId],
    template: &Template,
    verbalizer: &Verbalizer,
) -> Result<Vec<f64>> {
    if verbalizer.class_count() == 0 {
        return Err(Error::Empty("verbalizer"));
    }
    let (input, pos) = template.apply(x)?;
    let dist = model.mask_distribution(&input, pos)?;
    if let Some(&w) = verbalizer
        .classes()
        .iter()
        .flatten()
        .find(|&&w| w >= dist.len())
    {
        return Err(Error::TokenOutOfRange {
            id: w,
            vocab_size: dist.len(),
        });
    }
    Ok(dist)
}

/// One forward pass on `T(x)`, then max over each class's label words.
pub fn class_scores<M: MaskedLm + ?Sized>(
    model: &M,
    x: &[TokenId],
    template: &Template,
    verbalizer: &Verbalizer,
) -> Result<ClassScores> {
    class_scores_with(model, x, template, verbalizer, Aggregation::Max)
}

pub fn class_scores_with<M: MaskedLm + ?Sized>(
    model: &M,
    x: &[TokenId],
    template: &Template,
    verbalizer: &Verbalizer,
    aggregation: Aggregation,
) -> Result<ClassScores> {
    let dist = mask_distribution(model, x, template, verbalizer)?;
    Ok(scores_from_distribution(&dist, verbalizer, aggregation))
}

pub fn predict<M: MaskedLm + ?Sized>(
    model: &M,
    x: &[TokenId],
    template: &Template,
    verbalizer: &Verbalizer,
) -> Result<usize> {
    Ok(class_scores(model, x, template, verbalizer)?.predicted())
}

/// Accuracy over a split with max aggregation.
pub fn evaluate<M: MaskedLm + ?Sized>(
    model: &M,
    split: &DatasetSplit,
    template: &Template,
    verbalizer: &Verbalizer,
) -> Result<f64> {
    evaluate_with(model, split, template, verbalizer, Aggregation::Max)
}

pub fn evaluate_with<M: MaskedLm + ?Sized>(
    model: &M,
    split: &DatasetSplit,
    template: &Template,
    verbalizer: &Verbalizer,
    aggregation: Aggregation,
) -> Result<f64> {
    if split.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let correct = split
        .examples
        .par_iter()
        .map(|ex| {
            let s = class_scores_with(model, &ex.token_ids, template, verbalizer, aggregation)?;
            Ok(usize::from(s.predicted() == ex.class_id))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(correct as f64 / split.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub index: usize,
    pub gold: usize,
    pub predicted: usize,
    pub scores: Vec<f64>,
}

pub fn predict_split<M: MaskedLm + ?Sized>(
    model: &M,
    split: &DatasetSplit,
    template: &Template,
    verbalizer: &Verbalizer,
    aggregation: Aggregation,
) -> Result<Vec<Prediction>> {
    split
        .examples
        .par_iter()
        .enumerate()
        .map(|(index, ex)| {
            let s = class_scores_with(model, &ex.token_ids, template, verbalizer, aggregation)?;
            Ok(Prediction {
                index,
                gold: ex.class_id,
                predicted: s.predicted(),
                scores: s.class_scores,
            })
        })
        .collect()
}

/// `example_index,gold,predicted,score_<class>...`
pub fn predictions_csv(predictions: &[Prediction], label_names: &[String]) -> String {
    let mut out = String::from("example_index,gold,predicted");
    for name in label_names {
        let _ = write!(out, ",score_{name}");
    }
    out.push('\n');
    for p in predictions {
        let _ = write!(out, "{},{},{}", p.index, p.gold, p.predicted);
        for s in &p.scores {
            let _ = write!(out, ",{s}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab_with_reserved, LabeledExample, TEMPLATE_WORDS};
    use crate::template::TemplateMode;

    /// Returns a fixed distribution regardless of input.
    struct Fixed(Vec<f64>);

    impl MaskedLm for Fixed {
        fn vocab_size(&self) -> usize {
            self.0.len()
        }
        fn max_len(&self) -> usize {
            16
        }
        fn mask_distribution(&self, _: &[TokenId], _: usize) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    fn template() -> Template {
        let v = build_vocab_with_reserved(&["a"], 1, &TEMPLATE_WORDS).unwrap();
        Template::new(TemplateMode::TemplateFree, &v, 16).unwrap()
    }

    // ids: 3 good, 4 great, 5 bad
    fn dist() -> Fixed {
        Fixed(vec![0.0, 0.0, 0.0, 0.3, 0.5, 0.4])
    }

    #[test]
    fn max_per_class() {
        let verb = Verbalizer::new(vec![vec![3, 4], vec![5]]).unwrap();
        let s = class_scores(&dist(), &[3], &template(), &verb).unwrap();
        assert_eq!(s.class_scores, vec![0.5, 0.4]);
        assert_eq!(s.word_probs, vec![vec![0.3, 0.5], vec![0.4]]);
        assert_eq!(s.predicted(), 0);
    }

    #[test]
    fn singleton_is_word_probability() {
        let model = dist();
        let verb = Verbalizer::new(vec![vec![4], vec![5]]).unwrap();
        let s = class_scores(&model, &[3], &template(), &verb).unwrap();
        assert_eq!(s.class_scores, vec![0.5, 0.4]);
    }

    #[test]
    fn exact_tie_goes_to_class_zero() {
        assert_eq!(argmax_class(&[0.25, 0.25]), 0);
        assert_eq!(argmax_class(&[0.1, 0.25, 0.25]), 1);
    }

    #[test]
    fn dominated_word_does_not_change_prediction() {
        let model = Fixed(vec![0.0, 0.0, 0.0, 0.3, 0.5, 0.15, 0.05]);
        let base = Verbalizer::new(vec![vec![3], vec![5]]).unwrap();
        let grown = Verbalizer::new(vec![vec![3], vec![5, 6]]).unwrap();
        let t = template();
        assert_eq!(
            predict(&model, &[3], &t, &base).unwrap(),
            predict(&model, &[3], &t, &grown).unwrap()
        );
    }

    #[test]
    fn evaluate_counts_and_complement() {
        let model = Fixed(vec![0.0, 0.0, 0.0, 0.6, 0.4]);
        let verb = Verbalizer::new(vec![vec![3], vec![4]]).unwrap();
        let ex = |c| LabeledExample {
            token_ids: vec![3],
            class_id: c,
        };
        let names = vec!["a".to_string(), "b".to_string()];
        let split = DatasetSplit::new(vec![ex(0), ex(0), ex(1)], names.clone()).unwrap();
        let t = template();
        let acc = evaluate(&model, &split, &t, &verb).unwrap();
        assert!((acc - 2.0 / 3.0).abs() < 1e-15);
        let flipped = DatasetSplit::new(vec![ex(1), ex(1), ex(0)], names.clone()).unwrap();
        let acc_f = evaluate(&model, &flipped, &t, &verb).unwrap();
        assert!((acc + acc_f - 1.0).abs() < 1e-15);
        let empty = DatasetSplit::new(vec![], names).unwrap();
        assert!(matches!(
            evaluate(&model, &empty, &t, &verb),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn mean_aggregation_ablation() {
        let d = vec![0.0, 0.0, 0.0, 0.5, 0.1, 0.4, 0.4];
        let verb = Verbalizer::new(vec![vec![3, 4], vec![5, 6]]).unwrap();
        let max = scores_from_distribution(&d, &verb, Aggregation::Max);
        let mean = scores_from_distribution(&d, &verb, Aggregation::Mean);
        assert_eq!(max.predicted(), 0);
        assert_eq!(mean.predicted(), 1);
    }

    #[test]
    fn csv_layout() {
        let p = vec![Prediction {
            index: 0,
            gold: 1,
            predicted: 0,
            scores: vec![0.5, 0.25],
        }];
        let csv = predictions_csv(&p, &["pos".into(), "neg".into()]);
        assert_eq!(
            csv,
            "example_index,gold,predicted,score_pos,score_neg\n0,1,0,0.5,0.25\n"
        );
    }
}
