//! `RTEN` raw tensor container: magic, u32 LE header length, JSON header,
//! packed row-major f32 LE payload.

use std::path::Path;

use mitescan_core::decode::{Layout, RawTensor};
use serde::{Deserialize, Serialize};

use crate::error::FormatError;

pub const MAGIC: &[u8; 4] = b"RTEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtenHeader {
    pub dtype: String,
    pub dims: Vec<usize>,
    pub layout: String,
    pub image_id: String,
}

/// A decoded container: the tensor plus the image it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub image_id: String,
    pub tensor: RawTensor,
}

pub fn encode(image_id: &str, tensor: &RawTensor) -> Vec<u8> {
    let header = RtenHeader {
        dtype: "f32le".into(),
        dims: tensor.dims().to_vec(),
        layout: tensor.layout().tag().into(),
        image_id: image_id.into(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + header.len() + tensor.values().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for v in tensor.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<TensorFile, FormatError> {
    let err = |m: String| FormatError::file(path, m);
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(err("missing RTEN magic".into()));
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header_bytes = bytes
        .get(8..8 + len)
        .ok_or_else(|| err("truncated header".into()))?;
    let header: RtenHeader =
        serde_json::from_slice(header_bytes).map_err(|e| err(format!("header: {e}")))?;
    if header.dtype != "f32le" {
        return Err(err(format!("unsupported dtype {:?}", header.dtype)));
    }
    let layout = Layout::from_tag(&header.layout)
        .ok_or_else(|| err(format!("unknown layout {:?}", header.layout)))?;
    let payload = &bytes[8 + len..];
    let count = header
        .dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| err("dims overflow".into()))?;
    if payload.len() != count * 4 {
        return Err(err(format!(
            "payload has {} bytes, dims need {}",
            payload.len(),
            count * 4
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let tensor = RawTensor::new(header.dims, layout, values).map_err(|e| err(e.to_string()))?;
    Ok(TensorFile {
        image_id: header.image_id,
        tensor,
    })
}

pub fn read(path: &Path) -> Result<TensorFile, FormatError> {
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    decode(&bytes, path)
}

pub fn write(path: &Path, image_id: &str, tensor: &RawTensor) -> Result<(), FormatError> {
    std::fs::write(path, encode(image_id, tensor)).map_err(|e| FormatError::io(path, e))
}
