//! Crate-wide error type.

use std::fmt;

/// All failure modes of the pipeline, from file parsing up to training.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Scan payload is misaligned or contains non-finite values.
    MalformedScan(String),
    /// Label byte count disagrees with the paired point count.
    LabelCountMismatch { expected: usize, got: usize },
    /// A raw class name appears twice in a mapping config.
    DuplicateMapping(String),
    /// Mapping references undeclared classes or has non-dense indices.
    InvalidMapping(String),
    /// Scene construction asked for a degenerate primitive.
    InvalidScene(String),
    /// Projection of an empty point cloud.
    EmptyCloud,
    /// Channel statistics with zero standard deviation.
    DegenerateStats { channel: usize },
    /// Cutout wider than the image.
    InvalidCutout { width: usize, image_width: usize },
    /// Voxel size must be positive.
    InvalidVoxelSize(f64),
    /// Beam resampling cannot increase the beam count.
    UnsupportedUpsampling { source: usize, target: usize },
    /// Range image height disagrees with the target beam count.
    HeightMismatch { expected: usize, got: usize },
    /// Tensor shapes incompatible for the requested operation.
    ShapeError(String),
    /// Class histogram with no observations.
    EmptyHistogram,
    /// Loss over an empty set of scored points/pixels.
    EmptyLoss,
    /// Network invoked on an empty input.
    EmptyInput,
    /// Confusion matrix with no scored points.
    EmptyMatrix,
    /// Closed-gap statistic undefined when oracle equals baseline.
    DegenerateGap,
    /// Adaptation training requires a target-domain batch.
    MissingTargetDomain,
    /// Checkpoint selection over an empty validation history.
    NoValidation,
    /// Scenario/mapping config rejected.
    ConfigError(String),
    /// File I/O failure (path and OS message).
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::MalformedScan(m) => write!(f, "malformed scan: {m}"),
            Error::LabelCountMismatch { expected, got } => {
                write!(f, "label count mismatch: expected {expected}, got {got}")
            }
            Error::DuplicateMapping(k) => write!(f, "duplicate mapping entry: {k}"),
            Error::InvalidMapping(m) => write!(f, "invalid mapping: {m}"),
            Error::InvalidScene(m) => write!(f, "invalid scene: {m}"),
            Error::EmptyCloud => write!(f, "empty point cloud"),
            Error::DegenerateStats { channel } => {
                write!(f, "zero standard deviation in channel {channel}")
            }
            Error::InvalidCutout { width, image_width } => {
                write!(f, "cutout width {width} exceeds image width {image_width}")
            }
            Error::InvalidVoxelSize(s) => write!(f, "invalid voxel size {s}"),
            Error::UnsupportedUpsampling { source, target } => {
                write!(f, "cannot resample {source} beams up to {target}")
            }
            Error::HeightMismatch { expected, got } => {
                write!(f, "image height {got} does not match target beam count {expected}")
            }
            Error::ShapeError(m) => write!(f, "shape error: {m}"),
            Error::EmptyHistogram => write!(f, "class histogram is all zero"),
            Error::EmptyLoss => write!(f, "no scored points/pixels for loss"),
            Error::EmptyInput => write!(f, "empty network input"),
            Error::EmptyMatrix => write!(f, "empty confusion matrix"),
            Error::DegenerateGap => write!(f, "oracle equals baseline; closed gap undefined"),
            Error::MissingTargetDomain => write!(f, "training step requires a target batch"),
            Error::NoValidation => write!(f, "no validation records"),
            Error::ConfigError(m) => write!(f, "config error: {m}"),
            Error::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
