use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid bbox {0:?}: coordinates must lie in [0,1] with x1<=x2, y1<=y2")]
    InvalidBBox([f64; 4]),
    #[error("layout index {index} exceeds granularity {max}")]
    InvalidLayoutToken { index: u32, max: u32 },
    #[error("cannot take the union of an empty group of boxes")]
    EmptyGroup,
    #[error("invalid patch grid: {0}")]
    InvalidGrid(String),
    #[error("unknown token id {0}")]
    UnknownId(u32),
    #[error("malformed layout run in group {group}: {len} layout tokens is not a multiple of 4")]
    MalformedLayout { group: usize, len: usize },
    #[error("malformed sentinel at position {position}: {reason}")]
    MalformedSentinel { position: usize, reason: String },
    #[error("word {index}: {reason}")]
    InvalidWord { index: usize, reason: String },
    #[error("layout overflow: word {index} ({word:?}) does not fit on the page")]
    LayoutOverflow { index: usize, word: String },
    #[error("document has no words")]
    EmptyDocument,
    #[error("missing annotation for {0}")]
    MissingAnnotation(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    Numeric(String),
    #[error("sequence length {len} exceeds maximum {max}")]
    Length { len: usize, max: usize },
    #[error("target sequence is empty")]
    EmptyTarget,
    #[error("loss has no support: no masked patches")]
    NoSupport,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at step {step}; last good checkpoint is stage {last_good_stage:?}")]
    Diverged { step: u64, last_good_stage: Option<usize> },
}
