//! Core of the vision-text-layout document model.
//!
//! Everything in this crate is pure computation over in-memory values:
//! bounding boxes and layout tokens, the unified vocabulary, the document
//! model and its deterministic synthetic renderer, the task builders that
//! turn documents into prompt/target sequences, and a small trainable
//! encoder / text-layout decoder / vision decoder with analytic gradients.
//!
//! File formats, the command line and anything touching the OS live in the
//! companion `vtl` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod seed;
pub mod tasks;
pub mod trainer;
pub mod vocab;

pub use error::{Error, Result};
pub use geometry::{BBox, LayoutQuantizer, PatchGrid};
pub use vocab::{MixedItem, Vocabulary};
