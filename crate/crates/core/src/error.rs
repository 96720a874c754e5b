use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("frame length mismatch: expected {expected} samples, got {got}")]
    FrameLength { expected: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("frame count mismatch: mixture has {frames} frames but {masks} masks were given")]
    FrameCountMismatch { frames: usize, masks: usize },

    #[error("silent observation")]
    Silent,

    #[error("mono required (file has {0} channels)")]
    NotMono(u16),

    #[error("sample rate mismatch: expected {expected} Hz, file has {got} Hz")]
    SampleRateMismatch { expected: u32, got: u32 },

    #[error("unsupported sample format: {0}")]
    UnsupportedFormat(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("too few training vectors: need at least {needed}, got {got}")]
    TooFewVectors { needed: usize, got: usize },

    #[error("model kind mismatch: expected {expected}, found {found}")]
    ModelKind {
        expected: &'static str,
        found: &'static str,
    },

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("non-positive variance {value} in dimension {dim}")]
    NonPositiveVariance { dim: usize, value: f64 },

    #[error("objective returned a non-finite value at θ = {0} dB")]
    NonFinite(f64),

    #[error("instance too large for exhaustive search: {0} path pairs")]
    TooLarge(f64),

    #[error("invalid state index {index} at frame {frame} (K = {k})")]
    InvalidPath { frame: usize, index: usize, k: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("manifest: {0}")]
    Manifest(String),
}

impl Error {
    /// Coarse failure category, used by the command-line front end to pick an
    /// exit status.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidConfig(_) | Error::Manifest(_) => ErrorCategory::Usage,
            Error::MissingFile(_)
            | Error::Wav(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::NotMono(_)
            | Error::SampleRateMismatch { .. }
            | Error::UnsupportedFormat(_) => ErrorCategory::Io,
            Error::ModelKind { .. }
            | Error::ModelFormat(_)
            | Error::ModelMismatch(_)
            | Error::DimensionMismatch { .. } => ErrorCategory::Model,
            _ => ErrorCategory::Numeric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Io,
    Model,
    Numeric,
}
