use std::io;

use thiserror::Error;

/// Errors produced by the augmentation, evaluation and IO layers.
#[derive(Debug, Error)]
pub enum VolaugError {
    #[error("non-finite mask value")]
    NonFiniteMask,

    #[error("invalid clip: {0}")]
    InvalidClip(String),

    #[error("invalid label track: {0}")]
    InvalidLabels(String),

    #[error("class index out of range: {class} >= {num_classes}")]
    ClassOutOfRange { class: usize, num_classes: usize },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("clip too short to freeze (n = {0})")]
    ClipTooShortToFreeze(usize),

    #[error("no overlap: shift {r} >= first clip length {n1}")]
    NoOverlap { r: usize, n1: usize },

    #[error("incompatible clip geometry: {0}")]
    Geometry(String),

    #[error("transient view requires equal lengths ({0} != {1})")]
    UnequalLengths(usize, usize),

    #[error("clip too short for window (n = {n}, needs {needed})")]
    ClipTooShortForWindow { n: usize, needed: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("truth must be binary: {0}")]
    NonBinaryTruth(String),

    #[error("missing class weights for the weighted protocol")]
    MissingWeights,

    #[error("malformed vvol data: {0}")]
    Format(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, VolaugError>;
