//! Model checkpoint container.
//!
//! Layout: the magic bytes `TFCK`, a little-endian `u32` format version, a
//! little-endian `u64` header length, a JSON header carrying the model
//! configuration and the name, shape and offset of every tensor, then all
//! tensor values as little-endian `f64`. Values round-trip bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use transfuse_core::model::{ModelConfig, TransFuseNet};
use transfuse_core::nn::Params;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TFCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Index of the first value in the data section.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub model_config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

pub fn encode_checkpoint(model: &TransFuseNet) -> Vec<u8> {
    let mut tensors = Vec::new();
    let mut data: Vec<u8> = Vec::new();
    let mut offset = 0;
    model.visit("", &mut |name, t| {
        tensors.push(TensorEntry { name: name.to_string(), shape: t.shape.clone(), offset });
        offset += t.len();
        for v in &t.data {
            data.extend_from_slice(&v.to_le_bytes());
        }
    });
    let header = CheckpointHeader { format_version: FORMAT_VERSION, model_config: model.config.clone(), tensors };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&data);
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<TransFuseNet, String> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err("missing TFCK magic".into());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header_end = 16usize.checked_add(header_len).filter(|&e| e <= bytes.len()).ok_or("truncated header")?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[16..header_end]).map_err(|e| e.to_string())?;
    if header.format_version != version {
        return Err("header version disagrees with preamble".into());
    }
    let data = &bytes[header_end..];
    if data.len() % 8 != 0 {
        return Err("data section is not a whole number of f64 values".into());
    }
    let values: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();

    let mut model = TransFuseNet::zeros(&header.model_config).map_err(|e| e.to_string())?;
    let mut entries = header.tensors.iter();
    let mut problem: Option<String> = None;
    let mut used = 0;
    model.visit_mut("", &mut |name, t| {
        if problem.is_some() {
            return;
        }
        let Some(e) = entries.next() else {
            problem = Some(format!("tensor {name} missing"));
            return;
        };
        if e.name != name || e.shape != t.shape {
            problem = Some(format!("expected {name} {:?}, found {} {:?}", t.shape, e.name, e.shape));
            return;
        }
        let Some(src) = values.get(e.offset..e.offset + t.len()) else {
            problem = Some(format!("tensor {name} runs past the data section"));
            return;
        };
        t.data.copy_from_slice(src);
        used += t.len();
    });
    if let Some(p) = problem {
        return Err(p);
    }
    if let Some(extra) = entries.next() {
        return Err(format!("unexpected tensor {}", extra.name));
    }
    if used != values.len() {
        return Err(format!("{} values stored, {used} used", values.len()));
    }
    Ok(model)
}

/// Writes through a temporary sibling so a crash never leaves a torn file.
pub fn save_checkpoint(path: &Path, model: &TransFuseNet) -> Result<()> {
    let tmp = path.with_extension("tfck.tmp");
    fs::write(&tmp, encode_checkpoint(model)).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TransFuseNet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|msg| Error::Checkpoint { path: path.to_path_buf(), msg })
}
