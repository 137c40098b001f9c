//! Binary checkpoint file: magic, little-endian header length, JSON header,
//! then the flat parameters as little-endian `f64`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelShape, Parameters, TensorInfo};
use crate::error::{Error, Result};
use crate::io::write_atomic;

const MAGIC: &[u8; 8] = b"DUBCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    shape: ModelShape,
    vocab_hash: String,
    config_hash: String,
    seed: u64,
    step: usize,
    manifest: Vec<TensorInfo>,
    len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Parameters,
    pub vocab_hash: String,
    pub config_hash: String,
    pub seed: u64,
    pub step: usize,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let header = Header {
        config: ckpt.params.config.clone(),
        shape: ckpt.params.shape,
        vocab_hash: ckpt.vocab_hash.clone(),
        config_hash: ckpt.config_hash.clone(),
        seed: ckpt.seed,
        step: ckpt.step,
        manifest: ckpt.params.manifest().to_vec(),
        len: ckpt.params.len(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::schema(path, e.to_string()))?;
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * header.len);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.write_all(&json).map_err(|e| Error::io(path, e))?;
    for v in &ckpt.params.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &buf)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::schema(path, "not a checkpoint file"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes
        .get(16..16 + hlen)
        .ok_or_else(|| Error::schema(path, "truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| Error::schema(path, e.to_string()))?;
    let data = &bytes[16 + hlen..];
    if data.len() != 8 * header.len {
        return Err(Error::schema(
            path,
            format!("expected {} parameters, found {} bytes", header.len, data.len()),
        ));
    }
    let values = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let params = Parameters::from_values(&header.config, header.shape, values)?;
    if params.manifest() != header.manifest.as_slice() {
        return Err(Error::schema(path, "manifest does not match the configured architecture"));
    }
    if !params.all_finite() {
        return Err(Error::Numeric(format!("{}: non-finite parameters", path.display())));
    }
    Ok(Checkpoint {
        params,
        vocab_hash: header.vocab_hash,
        config_hash: header.config_hash,
        seed: header.seed,
        step: header.step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let cfg = ModelConfig {
            hidden: 8,
            heads: 2,
            ffn: 8,
            enc_layers: 1,
            dec_layers: 1,
            ..Default::default()
        };
        let shape = ModelShape {
            src_vocab: 7,
            tgt_vocab: 6,
            frame_dim: 0,
        };
        let params = Parameters::init(&cfg, shape, 3).unwrap();
        let ckpt = Checkpoint {
            params,
            vocab_hash: "ab".into(),
            config_hash: "cd".into(),
            seed: 3,
            step: 10,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_checkpoint(&path, &ckpt).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ckpt);
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"hello").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Schema { .. })));
    }
}
