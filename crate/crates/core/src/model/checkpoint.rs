//! Checkpoint layout (integers and floats little-endian):
//!
//! ```text
//! magic       8 bytes  "SRLMODEL"
//! version     u32      CHECKPOINT_VERSION
//! header_len  u32
//! header      JSON: { config, tensors: [{name, shape}], metadata }
//! data        every tensor in header order, row-major f64
//! checksum    32 bytes SHA-256 of all preceding bytes
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::ModelParams;
use super::{ModelConfig, ModelError};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SRLMODEL";
pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    metadata: serde_json::Value,
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

/// Serialises parameters plus free-form metadata (e.g. the run configuration).
pub fn write_checkpoint<W: Write>(
    params: &ModelParams,
    metadata: &serde_json::Value,
    mut out: W,
) -> Result<(), ModelError> {
    let tensors = params.tensors();
    let header = Header {
        config: params.config.clone(),
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        metadata: metadata.clone(),
    };
    let header_json = serde_json::to_vec(&header).map_err(|e| bad(e.to_string()))?;
    let mut buf = Vec::with_capacity(16 + header_json.len() + 8 * params.parameter_count());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_json);
    for (_, t) in &tensors {
        for v in t.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(digest.as_slice());
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<(ModelParams, serde_json::Value), ModelError> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    if buf.len() < 16 + DIGEST_LEN {
        return Err(bad("file too short"));
    }
    if &buf[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a model checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(buf[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!(
            "format version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let (body, digest) = buf.split_at(buf.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("checksum mismatch (truncated or corrupted file)"));
    }
    let header_len = u32::from_le_bytes(body[12..16].try_into().unwrap()) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| bad("header length exceeds file"))?;
    let header: Header =
        serde_json::from_slice(&body[16..header_end]).map_err(|e| bad(format!("header: {e}")))?;
    header
        .config
        .validate()
        .map_err(|e| bad(format!("header config: {e}")))?;

    let mut params = ModelParams::zeros(&header.config);
    let expected: Vec<(String, Vec<usize>)> = params
        .tensors()
        .iter()
        .map(|(n, t)| (n.clone(), t.shape().to_vec()))
        .collect();
    let found: Vec<(String, Vec<usize>)> = header
        .tensors
        .iter()
        .map(|t| (t.name.clone(), t.shape.clone()))
        .collect();
    if expected != found {
        return Err(bad("tensor list does not match the configuration"));
    }

    let data = &body[header_end..];
    let count = params.parameter_count();
    if data.len() != count * 8 {
        return Err(bad(format!(
            "expected {} data bytes, found {}",
            count * 8,
            data.len()
        )));
    }
    let values: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    params.set_flat(&values);
    Ok((params, header.metadata))
}

pub fn save_params(params: &ModelParams, path: &Path) -> Result<(), ModelError> {
    let mut buf = Vec::new();
    write_checkpoint(params, &serde_json::Value::Null, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ModelParams, ModelError> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(&bytes[..]).map(|(p, _)| p)
}
