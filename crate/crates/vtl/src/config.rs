//! Training configuration files.
//!
//! ```json
//! {"train": {"learning_rate": 1e-3, "curriculum": [{"resolution": 32, "epochs": 2}]},
//!  "model": {"d_model": 32, "heads": 2}}
//! ```
//!
//! Both sections are optional and every field falls back to its default.
//! `model.vocab_size` is taken from the vocabulary when left at 0, and
//! `model.patch` follows `train.tasks.patch_size` unless set explicitly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vtl_core::model::ModelConfig;
use vtl_core::trainer::TrainConfig;

use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: Option<ModelConfig>,
}

impl RunConfig {
    pub fn parse(bytes: &[u8], path: &Path) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fsutil::read(path)?, path)
    }

    /// The model configuration for a vocabulary of `vocab_size` ids.
    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        let mut m = self.model.clone().unwrap_or_else(|| ModelConfig { patch: self.train.tasks.patch_size, ..Default::default() });
        if m.vocab_size == 0 {
            m.vocab_size = vocab_size;
        }
        m
    }
}
