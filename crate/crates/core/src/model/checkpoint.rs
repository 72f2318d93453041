//! Binary checkpoint format.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "MLMC"
//! 4       1     format version (currently 1)
//! 5       56    config: vocab_size, d_model, n_layers, n_heads, d_ff, max_len,
//!               tie flag (0/1), each u64 little-endian
//! 61      8     value count N, u64 little-endian
//! 69      8·N   parameters as f64 little-endian, in ModelParams flattened order
//! ```

use std::path::Path;

use super::config::ModelConfig;
use super::network::MicroMlm;
use super::params::ModelParams;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MLMC";
pub const FORMAT_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 7 * 8 + 8;
/// Upper bound on any single dimension, so corrupt headers cannot request
/// absurd allocations.
const MAX_DIM: u64 = 1 << 24;

pub fn encode_checkpoint(model: &MicroMlm) -> Vec<u8> {
    let c = &model.config;
    let n = model.params.num_values();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n);
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    for v in [
        c.vocab_size,
        c.d_model,
        c.n_layers,
        c.n_heads,
        c.d_ff,
        c.max_len,
        c.tie_output_to_embeddings as usize,
    ] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for (_, t) in model.params.tensors() {
        for x in &t.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<MicroMlm> {
    if bytes.len() < 5 {
        return Err(Error::Corrupt("file shorter than header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Corrupt("bad magic bytes".into()));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(Error::Version {
            found: bytes[4],
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Corrupt("truncated header".into()));
    }
    let word = |i: usize| {
        let start = 5 + 8 * i;
        u64::from_le_bytes(bytes[start..start + 8].try_into().expect("8 bytes"))
    };
    let mut dims = [0usize; 6];
    for (i, d) in dims.iter_mut().enumerate() {
        let v = word(i);
        if v > MAX_DIM {
            return Err(Error::Corrupt(format!("dimension {v} out of range")));
        }
        *d = v as usize;
    }
    let tied = match word(6) {
        0 => false,
        1 => true,
        other => return Err(Error::Corrupt(format!("invalid tie flag {other}"))),
    };
    let config = ModelConfig {
        vocab_size: dims[0],
        d_model: dims[1],
        n_layers: dims[2],
        n_heads: dims[3],
        d_ff: dims[4],
        max_len: dims[5],
        tie_output_to_embeddings: tied,
    };
    config
        .validate()
        .map_err(|e| Error::Corrupt(format!("invalid config block: {e}")))?;

    let count = word(7);
    let payload = &bytes[HEADER_LEN..];
    if (payload.len() as u64) != count.saturating_mul(8) {
        return Err(Error::Corrupt(format!(
            "payload holds {} bytes, header promises {count} values",
            payload.len()
        )));
    }
    let expected =
        expected_values(&config).ok_or_else(|| Error::Corrupt("config too large".into()))?;
    if count != expected {
        return Err(Error::Corrupt(format!(
            "config implies {expected} values, header says {count}"
        )));
    }

    let mut params = ModelParams::zeros(&config);
    let mut chunks = payload.chunks_exact(8);
    for (_, t) in params.tensors_mut() {
        for x in t.data.iter_mut() {
            let c = chunks.next().expect("length checked");
            *x = f64::from_le_bytes(c.try_into().expect("8 bytes"));
        }
    }
    MicroMlm::new(config, params)
}

fn expected_values(c: &ModelConfig) -> Option<u64> {
    let (v, d, f, l) = (
        c.vocab_size as u64,
        c.d_model as u64,
        c.d_ff as u64,
        c.max_len as u64,
    );
    let per_layer = (4 * d * d + 2 * d * f).checked_add(9 * d + f)?;
    let mut total = v.checked_mul(d)?.checked_add(l.checked_mul(d)?)?;
    total = total.checked_add(per_layer.checked_mul(c.n_layers as u64)?)?;
    total = total.checked_add(2 * d)?;
    if !c.tie_output_to_embeddings {
        total = total.checked_add(v.checked_mul(d)?)?;
    }
    Some(total)
}

pub fn save_checkpoint(model: &MicroMlm, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<MicroMlm> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn model(tied: bool) -> MicroMlm {
        let config = ModelConfig {
            vocab_size: 9,
            d_model: 4,
            n_layers: 2,
            n_heads: 2,
            d_ff: 6,
            max_len: 7,
            tie_output_to_embeddings: tied,
        };
        let params = ModelParams::perturbed(&config, 0.3, &mut rng_from_seed(11));
        MicroMlm::new(config, params).unwrap()
    }

    #[test]
    fn round_trip_bitwise() {
        for tied in [false, true] {
            let m = model(tied);
            let back = decode_checkpoint(&encode_checkpoint(&m)).unwrap();
            assert_eq!(back.config, m.config);
            for ((_, a), (_, b)) in back.params.tensors().iter().zip(m.params.tensors()) {
                let ab: Vec<u64> = a.data.iter().map(|x| x.to_bits()).collect();
                let bb: Vec<u64> = b.data.iter().map(|x| x.to_bits()).collect();
                assert_eq!(ab, bb);
            }
        }
    }

    #[test]
    fn expected_count_matches_tree() {
        for tied in [false, true] {
            let m = model(tied);
            assert_eq!(
                expected_values(&m.config),
                Some(m.params.num_values() as u64)
            );
        }
    }

    #[test]
    fn truncated_is_corrupt() {
        let bytes = encode_checkpoint(&model(false));
        for cut in [3, 20, HEADER_LEN, bytes.len() - 1] {
            assert!(matches!(
                decode_checkpoint(&bytes[..cut]),
                Err(Error::Corrupt(_))
            ));
        }
    }

    #[test]
    fn wrong_version() {
        let mut bytes = encode_checkpoint(&model(false));
        bytes[4] = 9;
        assert!(matches!(
            decode_checkpoint(&bytes),
            Err(Error::Version {
                found: 9,
                expected: 1
            })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = model(false);
        save_checkpoint(&m, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), m);
    }
}
