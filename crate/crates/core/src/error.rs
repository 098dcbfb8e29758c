use std::path::PathBuf;

use thiserror::Error;

/// Every failure the pipeline can report.
#[derive(Debug, Error)]
pub enum MpecError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("trial has {0} samples, at least 2 are required")]
    InsufficientSamples(usize),
    #[error("all trials carry the same label")]
    DegenerateLabels,
    #[error("invalid k={k} (must be in 1..={max})")]
    BadK { k: usize, max: usize },
    #[error("vector length {len} does not match n(n+1)/2 for n={dim}")]
    BadLength { len: usize, dim: usize },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("cluster {cluster} holds {size} points, fewer than the {required} required")]
    ClusterTooSmall {
        cluster: usize,
        size: usize,
        required: usize,
    },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("bad magic bytes {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("file truncated: needed {needed} bytes, found {found}")]
    TruncatedFile { needed: u64, found: u64 },
    #[error("unsupported format version {0}")]
    VersionUnsupported(u32),
    #[error("label {label} out of range (limit {limit})")]
    LabelOutOfRange { label: u64, limit: u64 },
    #[error("{0} trailing bytes after payload")]
    TrailingData(u64),
    #[error("cannot stratify: class {class} has {count} trial(s)")]
    Stratify { class: usize, count: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse grouping used for CLI exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numerical,
}

impl MpecError {
    pub fn category(&self) -> ErrorCategory {
        use MpecError::*;
        match self {
            InvalidConfig(_) => ErrorCategory::Config,
            NotPositiveDefinite { .. } | NumericalFailure(_) => ErrorCategory::Numerical,
            _ => ErrorCategory::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MpecError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, MpecError>;
