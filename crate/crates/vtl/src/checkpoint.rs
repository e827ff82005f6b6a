//! Checkpoints: one JSON header line followed by every tensor as
//! little-endian f32, in header order.
//!
//! Parameters are kept on the f32 grid during training, so a save/load
//! round trip is exact.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vtl_core::model::{Mat, Model, ModelConfig, Parameters, Tensor};

use crate::error::{Error, Result};
use crate::fsutil;

pub const FORMAT: &str = "vtl-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub decay: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub step: u64,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

pub fn encode(model: &Model, step: u64) -> Vec<u8> {
    let header = CheckpointHeader {
        format: FORMAT.into(),
        version: VERSION,
        step,
        config: model.config.clone(),
        tensors: model
            .params
            .tensors
            .iter()
            .map(|t| TensorEntry { name: t.name.clone(), rows: t.value.rows, cols: t.value.cols, decay: t.decay })
            .collect(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.reserve(model.params.count() * 4);
    for t in &model.params.tensors {
        for &v in &t.value.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(Model, u64)> {
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::corrupt(path, "missing header"))?;
    let value: serde_json::Value =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::corrupt(path, format!("header: {e}")))?;
    if value.get("format").and_then(|f| f.as_str()) != Some(FORMAT) {
        return Err(Error::corrupt(path, "not a checkpoint"));
    }
    if let Some(v) = value.get("version").and_then(|v| v.as_u64()) {
        if v != VERSION as u64 {
            return Err(Error::Version { path: path.into(), found: v as u32, expected: VERSION });
        }
    }
    let header: CheckpointHeader =
        serde_json::from_value(value).map_err(|e| Error::corrupt(path, format!("header: {e}")))?;
    let mut data = &bytes[nl + 1..];
    let expected: usize = header.tensors.iter().map(|t| t.rows * t.cols * 4).sum();
    if data.len() != expected {
        return Err(Error::corrupt(path, format!("{} data bytes, header describes {expected}", data.len())));
    }
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        let (chunk, rest) = data.split_at(t.rows * t.cols * 4);
        data = rest;
        let values = chunk
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        tensors.push(Tensor { name: t.name.clone(), value: Mat::from_vec(t.rows, t.cols, values), decay: t.decay });
    }
    let model = Model::from_parameters(header.config, Parameters { tensors }).map_err(|e| match e {
        e @ vtl_core::Error::Numeric(_) => Error::Core(e),
        e => Error::corrupt(path, e),
    })?;
    Ok((model, header.step))
}

pub fn save(path: &Path, model: &Model, step: u64) -> Result<()> {
    fsutil::atomic_write(path, &encode(model, step))
}

pub fn load(path: &Path) -> Result<(Model, u64)> {
    decode(&fsutil::read(path)?, path)
}
