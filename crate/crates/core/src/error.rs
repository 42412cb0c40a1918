use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the segmentation pipeline and its file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: file not found", .0.display())]
    FileNotFound(PathBuf),

    #[error("{}: unsupported format: {reason}", path.display())]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("{}: corrupt header: {reason}", path.display())]
    CorruptHeader { path: PathBuf, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("label map has {0} regions, at most 16 can be rendered")]
    TooManyRegions(usize),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("kernel size {kernel} does not fit a {width}x{height} image")]
    KernelTooLarge {
        kernel: usize,
        width: usize,
        height: usize,
    },

    #[error("kernel size must be at least 2, got {0}")]
    KernelTooSmall(usize),

    #[error("band {band} out of range for image height {height} with kernel {kernel}")]
    BandOutOfRange {
        band: usize,
        height: usize,
        kernel: usize,
    },

    #[error("histogram is empty")]
    EmptyHistogram,

    #[error("dimension mismatch: image is {image:?}, ground truth is {truth:?}")]
    DimensionMismatch {
        image: (usize, usize),
        truth: (usize, usize),
    },

    #[error("ground truth has no {0} pixels")]
    EmptyClass(&'static str),

    #[error("invalid ground truth: {0}")]
    InvalidGroundTruth(String),

    #[error("median window must be odd and at least 3, got {0}")]
    EvenWindow(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, Error>;
