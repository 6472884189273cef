//! Error type shared by every module in the crate.

use std::path::PathBuf;

/// Crate-wide error enum. Variants map one-to-one onto the failure modes of
/// the pipeline stages; I/O errors keep the offending path for context.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// File does not look like any supported volume format.
    #[error("unrecognized volume format for {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// NIfTI datatype code (or sidecar datatype name) we do not support.
    #[error("unsupported datatype {datatype} in {path}")]
    UnsupportedDatatype { path: PathBuf, datatype: String },

    /// Header and payload disagree, or a header field is out of range.
    #[error("corrupt volume file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },

    /// A label volume was requested but the payload holds other values.
    #[error("invalid label value {value} at voxel {index} in {path} (labels must be 0, 1 or 2)")]
    InvalidLabel {
        path: PathBuf,
        index: usize,
        value: f64,
    },

    /// Underlying I/O failure, with the path that was being touched.
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Two volumes that must share a grid do not.
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    /// An operation that needs a nonempty mask received an empty one.
    #[error("empty mask: {0}")]
    EmptyMask(String),

    /// Invalid configuration value.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A binary mask was expected but other values are present.
    #[error("invalid mask: {0}")]
    InvalidMask(String),

    /// A skeleton voxel lies outside the ground-truth class it belongs to.
    #[error("inconsistent skeleton: {0}")]
    InconsistentSkeleton(String),

    /// Input values outside the documented domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Phantom generation could not place a branch.
    #[error("phantom generation failed: {0}")]
    Generation(String),

    /// Volume construction violated a type invariant.
    #[error("invalid volume: {0}")]
    InvalidVolume(String),
}

pub type Result<T> = std::result::Result<T, Error>;
