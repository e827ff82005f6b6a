//! Step logs: one JSON object per optimizer step.

use std::path::Path;

use vtl_core::trainer::StepLog;

use crate::error::{Error, Result};
use crate::fsutil;

pub fn encode(steps: &[StepLog]) -> Vec<u8> {
    let mut out = Vec::new();
    for s in steps {
        serde_json::to_writer(&mut out, s).expect("step log serializes");
        out.push(b'\n');
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Vec<StepLog>> {
    bytes
        .split(|&b| b == b'\n')
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_slice(l).map_err(|e| Error::schema(path, i, e)))
        .collect()
}

pub fn read(path: &Path) -> Result<Vec<StepLog>> {
    decode(&fsutil::read(path)?, path)
}
