//! Mask distribution and loss against closed forms.

use labelaug::corpus::MASK_ID;
use labelaug::model::{MaskedItem, MicroMlm, ModelConfig, ModelParams, Tensor};
use labelaug::rng::rng_from_seed;
use proptest::prelude::*;

fn tiny(vocab_size: usize, d_model: usize) -> ModelConfig {
    ModelConfig {
        vocab_size,
        d_model,
        n_layers: 1,
        n_heads: 1,
        d_ff: 2,
        max_len: 6,
        tie_output_to_embeddings: false,
    }
}

/// d_model = 1 collapses every normalized row to zero, so the hidden state
/// at the mask equals the final norm bias and logits are `w_v * bias`.
fn with_logits(logits: &[f64]) -> MicroMlm {
    let cfg = tiny(logits.len(), 1);
    let mut p = ModelParams::zeros(&cfg);
    p.final_norm_bias = Tensor::filled(1, 1, 1.0);
    p.output_projection = Some(Tensor {
        rows: logits.len(),
        cols: 1,
        data: logits.to_vec(),
    });
    MicroMlm::new(cfg, p).unwrap()
}

#[test]
fn zero_params_give_uniform() {
    let cfg = tiny(9, 4);
    let model = MicroMlm::new(cfg, ModelParams::zeros(&cfg)).unwrap();
    let dist = model
        .forward_mask_distribution(&[5, MASK_ID, 7], 1)
        .unwrap();
    assert_eq!(dist.len(), 9);
    for p in dist {
        assert!((p - 1.0 / 9.0).abs() < 1e-15);
    }
}

#[test]
fn hand_set_logits() {
    let model = with_logits(&[2f64.ln(), 0.0, 0.0]);
    let dist = model.forward_mask_distribution(&[MASK_ID], 0).unwrap();
    let want = [0.5, 0.25, 0.25];
    for (p, w) in dist.iter().zip(want) {
        assert!((p - w).abs() < 1e-15, "{dist:?}");
    }
}

#[test]
fn input_errors() {
    let model = with_logits(&[0.0, 0.0, 0.0, 0.0]);
    assert!(model.forward_mask_distribution(&[3, 3], 0).is_err());
    assert!(model.forward_mask_distribution(&[MASK_ID; 7], 0).is_err());
    assert!(model.forward_mask_distribution(&[MASK_ID, 9], 0).is_err());
}

#[test]
fn uniform_loss_is_log_vocab() {
    let cfg = tiny(13, 4);
    let model = MicroMlm::new(cfg, ModelParams::zeros(&cfg)).unwrap();
    let item = MaskedItem {
        input: vec![4, MASK_ID],
        mask_pos: 1,
        target: 6,
    };
    let loss = model.mlm_loss(&[item]).unwrap();
    assert!((loss.sum - 13f64.ln()).abs() < 1e-12);
    assert_eq!(loss.sum, loss.mean);
}

#[test]
fn confident_loss_is_about_epsilon() {
    for big in [5.0, 10.0, 20.0] {
        let model = with_logits(&[big, 0.0, 0.0]);
        let eps = 2.0 / (f64::exp(big) + 2.0);
        let loss = model
            .item_loss(&MaskedItem {
                input: vec![MASK_ID],
                mask_pos: 0,
                target: 0,
            })
            .unwrap();
        // -ln(1 - eps), up to cancellation in the log-sum-exp at this scale
        assert!((loss + (-eps).ln_1p()).abs() < 1e-13, "{big}");
        assert!((loss - eps).abs() <= (eps * eps).max(1e-13));
    }
}

#[test]
fn batch_loss_is_sum_of_items() {
    let cfg = tiny(10, 4);
    let params = ModelParams::perturbed(&cfg, 0.5, &mut rng_from_seed(3));
    let model = MicroMlm::new(cfg, params).unwrap();
    let a = MaskedItem {
        input: vec![3, MASK_ID, 4],
        mask_pos: 1,
        target: 5,
    };
    let b = MaskedItem {
        input: vec![MASK_ID, 8],
        mask_pos: 0,
        target: 9,
    };
    let both = model.mlm_loss(&[a.clone(), b.clone()]).unwrap();
    let sum = model.item_loss(&a).unwrap() + model.item_loss(&b).unwrap();
    assert!((both.sum - sum).abs() < 1e-12);
    assert!((both.mean - sum / 2.0).abs() < 1e-12);
    assert!(model.mlm_loss(&[]).is_err());
}

#[test]
fn symmetric_targets_give_equal_output_gradients() {
    // Uniform predictions, a nonzero hidden state, and each token targeted
    // exactly once: every output row gets the same (zero) gradient.
    let cfg = tiny(6, 4);
    let mut p = ModelParams::zeros(&cfg);
    p.final_norm_bias = Tensor {
        rows: 1,
        cols: 4,
        data: vec![0.5, -1.0, 0.25, 2.0],
    };
    let model = MicroMlm::new(cfg, p).unwrap();
    let batch: Vec<MaskedItem> = (0..6)
        .map(|t| MaskedItem {
            input: vec![3, MASK_ID],
            mask_pos: 1,
            target: t,
        })
        .collect();
    let (g, _) = model.gradients(&batch).unwrap();
    let out = g.output_projection.unwrap();
    for r in 0..6 {
        for (a, b) in out.row(r).iter().zip(out.row(0)) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(out.row(r).iter().all(|v| v.abs() < 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn distribution_is_normalized(
        seed in any::<u64>(),
        vocab_size in 4usize..40,
        heads in 1usize..=2,
        layers in 1usize..=2,
        tied in any::<bool>(),
        len in 1usize..=10,
        std in 0.05f64..2.0,
    ) {
        let cfg = ModelConfig {
            vocab_size,
            d_model: 4 * heads,
            n_layers: layers,
            n_heads: heads,
            d_ff: 8,
            max_len: 10,
            tie_output_to_embeddings: tied,
        };
        let mut rng = rng_from_seed(seed);
        let params = ModelParams::perturbed(&cfg, std, &mut rng);
        let model = MicroMlm::new(cfg, params).unwrap();
        use rand::Rng;
        let mut input: Vec<usize> = (0..len).map(|_| rng.gen_range(0..vocab_size)).collect();
        let pos = rng.gen_range(0..len);
        input[pos] = MASK_ID;
        let dist = model.forward_mask_distribution(&input, pos).unwrap();
        prop_assert_eq!(dist.len(), vocab_size);
        prop_assert!(dist.iter().all(|p| *p >= 0.0 && p.is_finite()));
        prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
}
