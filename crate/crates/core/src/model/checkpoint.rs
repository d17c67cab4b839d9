//! Binary checkpoint container.
//!
//! Layout: 8 magic bytes, little-endian `u32` format version, `u32` header
//! length, a JSON header, then every tensor's values in header order as
//! little-endian floats of the recorded width.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Precision};

const MAGIC: &[u8; 8] = b"HCARCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    embedding_fingerprint: u64,
    dtype: Dtype,
    tensors: Vec<TensorEntry>,
}

/// Serializes parameters; `F32` models store 32-bit values, `F64` models 64-bit.
pub fn checkpoint_bytes(params: &ModelParams) -> Result<Vec<u8>> {
    let dtype = match params.config.precision {
        Precision::F32 => Dtype::F32,
        Precision::F64 => Dtype::F64,
    };
    let header = Header {
        format_version: FORMAT_VERSION,
        config: params.config.clone(),
        embedding_fingerprint: params.embedding_fingerprint,
        dtype,
        tensors: params
            .tensors
            .iter()
            .map(|(_, t)| TensorEntry {
                name: t.name.clone(),
                rows: t.value.rows(),
                cols: t.value.cols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + params.scalar_count() * dtype.width());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in params.tensors.iter() {
        for &v in t.value.data() {
            match dtype {
                Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    Ok(out)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_bytes(params)?).map_err(|e| Error::io(path, e))
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Checkpoint(format!("truncated while reading {what}")));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn read_u32(bytes: &mut &[u8], what: &str) -> Result<u32> {
    let b = take(bytes, 4, what)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn parse_checkpoint(mut bytes: &[u8]) -> Result<ModelParams> {
    let magic = take(&mut bytes, MAGIC.len(), "magic").map_err(|_| Error::Version("not a checkpoint file".into()))?;
    if magic != MAGIC {
        return Err(Error::Version("not a checkpoint file (bad magic bytes)".into()));
    }
    let version = read_u32(&mut bytes, "format version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Version(format!(
            "checkpoint format {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let header_len = read_u32(&mut bytes, "header length")? as usize;
    let header: Header = serde_json::from_slice(take(&mut bytes, header_len, "header")?)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;

    let mut params = ModelParams::init(&header.config)?;
    params.embedding_fingerprint = header.embedding_fingerprint;
    if header.tensors.len() != params.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "header lists {} tensors, config implies {}",
            header.tensors.len(),
            params.tensors.len()
        )));
    }
    let width = header.dtype.width();
    for entry in &header.tensors {
        let id = params
            .tensors
            .find(&entry.name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown tensor {:?}", entry.name)))?;
        let expected = params.tensors.value(id).shape();
        if expected != (entry.rows, entry.cols) {
            return Err(Error::Checkpoint(format!(
                "tensor {} is {}x{} in the header but {}x{} for this config",
                entry.name, entry.rows, entry.cols, expected.0, expected.1
            )));
        }
        let raw = take(&mut bytes, entry.rows * entry.cols * width, &entry.name)?;
        let data: Vec<f64> = raw
            .chunks_exact(width)
            .map(|c| match header.dtype {
                Dtype::F32 => f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64,
                Dtype::F64 => f64::from_le_bytes(c.try_into().expect("chunk width")),
            })
            .collect();
        params.tensors.get_mut(id).value = Matrix::new(entry.rows, entry.cols, data)?;
    }
    if !bytes.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len())));
    }
    Ok(params)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}
