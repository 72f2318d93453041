#![allow(dead_code)]

use labelaug::corpus::{generate_synthetic, SyntheticData, SyntheticSpec};
use labelaug::model::{pretrain, MicroMlm, ModelConfig, PretrainConfig};
use labelaug::template::{Template, TemplateMode};

pub struct Fixture {
    pub data: SyntheticData,
    pub model: MicroMlm,
    pub template: Template,
}

/// Small synthetic task and a briefly pretrained d=16 model.
pub fn fixture(pretrain_epochs: usize) -> Fixture {
    let spec = SyntheticSpec {
        corpus_size: 400,
        pool_per_class: 40,
        test_per_class: 100,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec, 9).unwrap();
    let cfg = ModelConfig {
        d_model: 16,
        d_ff: 32,
        ..ModelConfig::with_vocab(data.vocab.len())
    };
    let mut model = MicroMlm::initialize(cfg, 4).unwrap();
    if pretrain_epochs > 0 {
        let pcfg = PretrainConfig {
            epochs: pretrain_epochs,
            ..PretrainConfig::default()
        };
        model = pretrain(model, &data.pretrain_lines, &data.vocab, &pcfg)
            .unwrap()
            .0;
    }
    let template = Template::new(TemplateMode::Manual, &data.vocab, cfg.max_len).unwrap();
    Fixture {
        data,
        model,
        template,
    }
}
