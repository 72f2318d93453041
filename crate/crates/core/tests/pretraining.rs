//! Pretraining on a small synthetic corpus and checkpoint round trips.

use labelaug::corpus::{generate_synthetic, SyntheticSpec};
use labelaug::model::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, pretrain, save_checkpoint, MicroMlm,
    ModelConfig, PretrainConfig,
};

fn setup() -> (MicroMlm, labelaug::corpus::SyntheticData) {
    let spec = SyntheticSpec {
        corpus_size: 300,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec, 5).unwrap();
    let cfg = ModelConfig {
        d_model: 16,
        d_ff: 32,
        ..ModelConfig::with_vocab(data.vocab.len())
    };
    (MicroMlm::initialize(cfg, 1).unwrap(), data)
}

#[test]
fn loss_decreases_and_is_deterministic() {
    let (model, data) = setup();
    let cfg = PretrainConfig {
        epochs: 5,
        seed: 11,
        ..PretrainConfig::default()
    };
    let (trained, trace) =
        pretrain(model.clone(), &data.pretrain_lines, &data.vocab, &cfg).unwrap();
    assert_eq!(trace.len(), 5);
    assert!(trace[1].mean_loss < trace[0].mean_loss, "{trace:?}");
    assert!(trace[4].mean_loss < trace[0].mean_loss);
    let (again, trace2) = pretrain(model, &data.pretrain_lines, &data.vocab, &cfg).unwrap();
    assert_eq!(trace, trace2);
    assert_eq!(encode_checkpoint(&trained), encode_checkpoint(&again));
}

#[test]
fn zero_mask_fraction_changes_nothing() {
    let (model, data) = setup();
    let cfg = PretrainConfig {
        epochs: 2,
        mask_fraction: 0.0,
        ..PretrainConfig::default()
    };
    let (trained, trace) =
        pretrain(model.clone(), &data.pretrain_lines, &data.vocab, &cfg).unwrap();
    assert_eq!(trained.params, model.params);
    assert!(trace.iter().all(|e| e.items == 0));
}

#[test]
fn checkpoint_file_round_trip_after_training() {
    let (model, data) = setup();
    let cfg = PretrainConfig {
        epochs: 1,
        ..PretrainConfig::default()
    };
    let (trained, _) = pretrain(model, &data.pretrain_lines, &data.vocab, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&trained, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, trained);
    assert_eq!(
        decode_checkpoint(&encode_checkpoint(&loaded)).unwrap(),
        trained
    );
}
