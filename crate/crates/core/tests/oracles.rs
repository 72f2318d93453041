//! Search, prediction and sampling against brute-force reimplementations.

mod common;

use labelaug::corpus::{kshot_sample, DatasetSplit, LabeledExample, SPECIAL_COUNT};
use labelaug::inference::{class_scores, evaluate};
use labelaug::model::{MaskedLm, MicroMlm, ModelParams};
use labelaug::rng::rng_from_seed;
use labelaug::template::Template;
use labelaug::verbalizer::{
    candidate_count, enumerate_verbalizers, select_verbalizer, CandidateList, CandidateSet,
    ScoreSpace, SearchConfig, Verbalizer,
};
use proptest::prelude::*;
use rand::Rng;

fn binomial(n: usize, k: usize) -> u128 {
    let fact = |x: usize| (1..=x as u128).product::<u128>();
    fact(n) / (fact(k) * fact(n - k))
}

fn combos(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        for mut rest in combos(&items[i + 1..], k - 1) {
            rest.insert(0, items[i]);
            out.push(rest);
        }
    }
    out
}

fn dist(model: &MicroMlm, t: &Template, x: &[usize]) -> Vec<f64> {
    let (input, pos) = t.apply(x).unwrap();
    model.mask_distribution(&input, pos).unwrap()
}

/// Best train accuracy over every choice of `k` words per class from each
/// class's top-`m` tokens, computed without the library's search code.
fn exhaustive_best(
    model: &MicroMlm,
    t: &Template,
    train: &DatasetSplit,
    m: usize,
    k: usize,
) -> f64 {
    let dists: Vec<Vec<f64>> = train
        .examples
        .iter()
        .map(|e| dist(model, t, &e.token_ids))
        .collect();
    let banned: Vec<usize> = t.context_tokens().collect();
    let mut tops = Vec::new();
    for class in 0..train.class_count {
        let mut score = vec![0.0; model.vocab_size()];
        for (d, e) in dists.iter().zip(&train.examples) {
            if e.class_id == class {
                for (s, p) in score.iter_mut().zip(d) {
                    *s += p;
                }
            }
        }
        let mut ids: Vec<usize> = (SPECIAL_COUNT..score.len())
            .filter(|i| !banned.contains(i))
            .collect();
        ids.sort_by(|&a, &b| score[b].partial_cmp(&score[a]).unwrap().then(a.cmp(&b)));
        ids.truncate(m);
        tops.push(combos(&ids, k));
    }
    let mut best = 0usize;
    for a in &tops[0] {
        for b in &tops[1] {
            let correct = dists
                .iter()
                .zip(&train.examples)
                .filter(|(d, e)| {
                    let sa = a.iter().map(|&w| d[w]).fold(f64::MIN, f64::max);
                    let sb = b.iter().map(|&w| d[w]).fold(f64::MIN, f64::max);
                    let pred = if sb > sa { 1 } else { 0 };
                    pred == e.class_id
                })
                .count();
            best = best.max(correct);
        }
    }
    best as f64 / train.len() as f64
}

#[test]
fn search_matches_exhaustive_oracle() {
    let f = common::fixture(1);
    for (sample_seed, m, k) in [(1, 3, 1), (2, 4, 2), (3, 5, 2), (4, 5, 1), (5, 2, 2)] {
        let (train, _) = kshot_sample(&f.data.task, 4, sample_seed).unwrap();
        let cfg = SearchConfig {
            m,
            k_y: k,
            n: 3,
            seed: sample_seed,
            ..SearchConfig::default()
        };
        let out = select_verbalizer(&f.model, &train, &f.template, &cfg).unwrap();
        let oracle = exhaustive_best(&f.model, &f.template, &train, m, k);
        assert_eq!(out.train_accuracy, oracle, "m={m} k={k}");
        assert_eq!(out.evaluated as u128, binomial(m, k).pow(2));
        let recount = evaluate(&f.model, &train, &f.template, &out.verbalizer).unwrap();
        assert_eq!(recount, out.train_accuracy);
    }
}

#[test]
fn log_space_scoring_changes_only_ranking_input() {
    let f = common::fixture(1);
    let (train, _) = kshot_sample(&f.data.task, 4, 8).unwrap();
    let cfg = SearchConfig {
        m: 4,
        k_y: 2,
        score_space: ScoreSpace::LogProbability,
        ..SearchConfig::default()
    };
    let out = select_verbalizer(&f.model, &train, &f.template, &cfg).unwrap();
    for class in &out.candidates.classes {
        assert_eq!(class.tokens.len(), 4);
        assert!(class.scores.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn strict_search_never_shares_words() {
    let f = common::fixture(1);
    let (train, _) = kshot_sample(&f.data.task, 4, 2).unwrap();
    let cfg = SearchConfig {
        m: 5,
        k_y: 2,
        strict: true,
        ..SearchConfig::default()
    };
    let out = select_verbalizer(&f.model, &train, &f.template, &cfg).unwrap();
    assert!(!out.verbalizer.has_cross_class_overlap());
}

#[test]
fn candidate_counts_match_closed_form() {
    for m in 1..=6 {
        for k in 1..=m {
            for classes in 1..=3 {
                let want = binomial(m, k).pow(classes as u32);
                assert_eq!(candidate_count(m, k, classes), Some(want));
                let cands = CandidateSet {
                    classes: (0..classes)
                        .map(|c| CandidateList {
                            tokens: (0..m).map(|i| 10 * c + i).collect(),
                            scores: vec![0.0; m],
                        })
                        .collect(),
                };
                let n = enumerate_verbalizers(&cands, k, u128::MAX).unwrap().count();
                assert_eq!(n as u128, want);
            }
        }
        assert_eq!(candidate_count(m, m + 1, 2), Some(0));
    }
}

fn random_verbalizer(rng: &mut impl Rng, vocab: usize, classes: usize) -> Verbalizer {
    let words = (0..classes)
        .map(|_| {
            let k = rng.gen_range(1..=4);
            let mut w: Vec<usize> = Vec::new();
            while w.len() < k {
                let t = rng.gen_range(SPECIAL_COUNT..vocab);
                if !w.contains(&t) {
                    w.push(t);
                }
            }
            w
        })
        .collect();
    Verbalizer::new(words).unwrap()
}

#[test]
fn class_scores_match_brute_force() {
    let f = common::fixture(0);
    let mut rng = rng_from_seed(77);
    let vocab = f.data.vocab.len();
    for case in 0..100 {
        let params = ModelParams::perturbed(&f.model.config, 0.8, &mut rng);
        let model = MicroMlm::new(f.model.config, params).unwrap();
        let classes = rng.gen_range(2..=4);
        let verb = random_verbalizer(&mut rng, vocab, classes);
        let len = rng.gen_range(1..=8);
        let x: Vec<usize> = (0..len)
            .map(|_| rng.gen_range(SPECIAL_COUNT..vocab))
            .collect();
        let full = dist(&model, &f.template, &x);
        let got = class_scores(&model, &x, &f.template, &verb).unwrap();
        let mut best_class = 0;
        for (c, words) in verb.classes().iter().enumerate() {
            let mut want = f64::NEG_INFINITY;
            for &w in words {
                if full[w] > want {
                    want = full[w];
                }
            }
            assert_eq!(got.class_scores[c], want, "case {case}");
            if want > got.class_scores[best_class] {
                best_class = c;
            }
        }
        assert_eq!(got.predicted(), best_class);
    }
}

#[test]
fn dominated_words_do_not_change_predictions() {
    let f = common::fixture(1);
    let verb = Verbalizer::new(
        f.data
            .label_words
            .iter()
            .map(|w| vec![f.data.vocab.id(&w[0]).unwrap()])
            .collect(),
    )
    .unwrap();
    for ex in f.data.test.examples.iter().take(40) {
        let d = dist(&f.model, &f.template, &ex.token_ids);
        let before = class_scores(&f.model, &ex.token_ids, &f.template, &verb).unwrap();
        // add, to each class, every word less probable than all its current words
        let grown: Vec<Vec<usize>> = verb
            .classes()
            .iter()
            .enumerate()
            .map(|(c, words)| {
                let floor = before.class_scores[c];
                let mut w = words.clone();
                w.extend(
                    (SPECIAL_COUNT..d.len())
                        .filter(|&t| d[t] < floor && !words.contains(&t))
                        .take(5),
                );
                w
            })
            .collect();
        let after = class_scores(
            &f.model,
            &ex.token_ids,
            &f.template,
            &Verbalizer::new(grown).unwrap(),
        )
        .unwrap();
        assert_eq!(after.class_scores, before.class_scores);
        assert_eq!(after.predicted(), before.predicted());
    }
}

#[test]
fn evaluation_matches_recount() {
    let f = common::fixture(1);
    let verb = Verbalizer::new(
        f.data
            .label_words
            .iter()
            .map(|w| w.iter().map(|s| f.data.vocab.id(s).unwrap()).collect())
            .collect(),
    )
    .unwrap();
    assert_eq!(f.data.test.len(), 200);
    let acc = evaluate(&f.model, &f.data.test, &f.template, &verb).unwrap();
    let correct = f
        .data
        .test
        .examples
        .iter()
        .filter(|e| {
            class_scores(&f.model, &e.token_ids, &f.template, &verb)
                .unwrap()
                .predicted()
                == e.class_id
        })
        .count();
    assert_eq!(acc, correct as f64 / 200.0);
}

fn unique_pool(classes: usize, per_class: usize) -> DatasetSplit {
    let examples = (0..classes * per_class)
        .map(|i| LabeledExample {
            token_ids: vec![SPECIAL_COUNT + i],
            class_id: i % classes,
        })
        .collect();
    DatasetSplit::new(examples, (0..classes).map(|c| format!("c{c}")).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn kshot_sizes_and_disjointness(k in 1usize..=16, seed in any::<u64>(), classes in 2usize..=4, spare in 0usize..10) {
        let pool = unique_pool(classes, 2 * k + spare);
        let (train, val) = kshot_sample(&pool, k, seed).unwrap();
        prop_assert_eq!(train.class_counts(), vec![k; classes]);
        prop_assert_eq!(val.class_counts(), vec![k; classes]);
        for t in &train.examples {
            prop_assert!(!val.examples.contains(t));
        }
        let again = kshot_sample(&pool, k, seed).unwrap();
        prop_assert_eq!(again.0, train);
        prop_assert!(kshot_sample(&pool, k + spare / 2 + 1, seed).is_err() == (2 * (k + spare / 2 + 1) > 2 * k + spare));
    }
}
