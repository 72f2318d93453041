//! The micro masked language model: forward scoring of the mask position,
//! summed NLL loss, exact gradients, Adam, pretraining and checkpoints.

mod checkpoint;
mod config;
mod network;
mod optim;
mod params;
mod pretrain;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, FORMAT_VERSION, MAGIC,
};
pub use config::ModelConfig;
pub use network::{LossValue, MaskedItem, MaskedLm, MicroMlm};
pub use optim::{AdamConfig, OptimizerState};
pub use params::{LayerParams, ModelParams, Tensor, LAYER_FIELDS};
pub use pretrain::{pretrain, PretrainConfig, PretrainEpoch};

use crate::error::Result;
use crate::rng::{stream_rng, Stream};

impl MicroMlm {
    /// Freshly initialized model; weights drawn from the `Init` stream of `seed`.
    pub fn initialize(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(&config, &mut stream_rng(seed, Stream::Init));
        MicroMlm::new(config, params)
    }
}
