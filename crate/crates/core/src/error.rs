use thiserror::Error;

/// Errors produced by the core engines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty item set")]
    EmptyItems,
    #[error("duplicate item id `{0}`")]
    DuplicateItem(String),
    #[error("item `{0}` has an empty media reference")]
    EmptyMediaRef(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "rate constraint unsatisfiable: {positives} positives in {frames} frames \
         (at most {max} fit under a {cap_ms}ms cap)"
    )]
    UnsatisfiableRate {
        positives: usize,
        frames: usize,
        max: usize,
        cap_ms: f64,
    },
    #[error("insufficient pool: need {need_items} items with {need_positives} positives, have {items} with {positives}")]
    InsufficientPool {
        need_items: usize,
        need_positives: usize,
        items: usize,
        positives: usize,
    },
    #[error("insufficient calibration data: {found} matched keypresses, need at least {needed}")]
    InsufficientCalibration { found: usize, needed: usize },
    #[error("response references unknown stream `{0}`")]
    UnknownStream(String),
    #[error("empty plan")]
    EmptyPlan,
    #[error("stream has no ground truth")]
    MissingGroundTruth,
    #[error("labeler returned `{0}`, which is not in the residual set")]
    LabelOutsideResidual(String),
    #[error("exposure {0}ms outside the timed range [100, 1000]")]
    ExposureOutOfRange(f64),
    #[error("incomplete blocks: {0}")]
    IncompleteBlocks(String),
    #[error("empty history")]
    EmptyHistory,
    #[error("not enough values: need at least {needed}, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("degenerate variance")]
    DegenerateVariance,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("judgment set `{0}` lacks one of the two classes")]
    SingleClass(String),
    #[error("non-positive input: {0}")]
    NonPositive(&'static str),
    #[error("malformed input: {0}")]
    Malformed(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
