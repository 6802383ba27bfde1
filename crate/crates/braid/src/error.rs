//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left is {left:?}, right is {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{what} expected {expected} columns, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("row {row} has zero norm; embedding is degenerate")]
    ZeroNormRow { row: usize },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("gradient of group '{group}' requested before any backward pass")]
    NoGradient { group: String },

    #[error("batch size {m} is invalid: {reason}")]
    BadBatchSize { m: usize, reason: String },

    #[error("unknown modality '{name}'")]
    UnknownModality { name: String },

    #[error("duplicate dataset id '{id}'")]
    DuplicateDataset { id: String },

    #[error("unknown dataset id '{id}'")]
    UnknownDataset { id: String },

    #[error("tower augmentation needs at least two encoders, got {got}")]
    TooFewEncoders { got: usize },

    #[error("concept module output width {got} does not match the model feature width {expected}")]
    ConceptWidthMismatch { expected: usize, got: usize },

    #[error("pairing graph is disconnected; unreachable modalities: {unreachable:?}")]
    DisconnectedPairing { unreachable: Vec<String> },

    #[error("growth phase {phase} has junction '{junction}' outside the trunk")]
    JunctionNotInTrunk { phase: usize, junction: String },

    #[error("phase {phase} aborted at step {step}: {reason} (model restored to pre-phase state)")]
    PhaseAborted {
        phase: usize,
        step: usize,
        reason: String,
    },

    #[error("augmentation ratio {ratio} keeps fewer than two time steps")]
    RatioTooSmall { ratio: f64 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("bad file magic in {path}: expected {expected}, found {found}")]
    BadMagic {
        path: String,
        expected: String,
        found: String,
    },

    #[error("unsupported format version {found} in {path} (expected {expected})")]
    VersionMismatch {
        path: String,
        expected: u32,
        found: u32,
    },

    #[error("checksum failure in section '{section}' of {path}")]
    ChecksumFailure { path: String, section: String },

    #[error("file {path} is truncated: {detail}")]
    Truncated { path: String, detail: String },

    #[error("class {class} has {got} test samples; one-shot evaluation needs at least 2")]
    TooFewSamples { class: u32, got: usize },

    #[error("gallery of size {gallery} is smaller than k = {k}")]
    GalleryTooSmall { gallery: usize, k: usize },

    #[error("pair ({a}, {b}) was not aligned before the probed phase")]
    PairNotAligned { a: String, b: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-parsable class name, one token per variant.
    pub fn class(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "shape-mismatch",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::ZeroNormRow { .. } => "zero-norm-row",
            Error::NonFinite { .. } => "non-finite",
            Error::NoGradient { .. } => "no-gradient",
            Error::BadBatchSize { .. } => "bad-batch-size",
            Error::UnknownModality { .. } => "unknown-modality",
            Error::DuplicateDataset { .. } => "duplicate-dataset",
            Error::UnknownDataset { .. } => "unknown-dataset",
            Error::TooFewEncoders { .. } => "too-few-encoders",
            Error::ConceptWidthMismatch { .. } => "concept-width-mismatch",
            Error::DisconnectedPairing { .. } => "disconnected-pairing",
            Error::JunctionNotInTrunk { .. } => "junction-not-in-trunk",
            Error::PhaseAborted { .. } => "phase-aborted",
            Error::RatioTooSmall { .. } => "ratio-too-small",
            Error::InvalidConfig(_) => "invalid-config",
            Error::BadMagic { .. } => "bad-magic",
            Error::VersionMismatch { .. } => "version-mismatch",
            Error::ChecksumFailure { .. } => "checksum-failure",
            Error::Truncated { .. } => "truncated",
            Error::TooFewSamples { .. } => "too-few-samples",
            Error::GalleryTooSmall { .. } => "gallery-too-small",
            Error::PairNotAligned { .. } => "pair-not-aligned",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
