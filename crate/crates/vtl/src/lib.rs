//! Files, formats and the command line around `vtl-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod fsutil;
pub mod ocr;
pub mod pgm;
pub mod shard;
pub mod steplog;
pub mod vocab_io;

pub use error::{Error, Result};
pub use vtl_core as core;
