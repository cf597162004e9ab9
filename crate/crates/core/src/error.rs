use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("MissingFile: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),

    #[error("NonFiniteValue: {0}")]
    NonFiniteValue(String),

    #[error("NonFiniteValue: training diverged: {0}")]
    Divergence(String),

    #[error("ZeroNormRow: {what} row {row} has norm below 1e-12")]
    ZeroNormRow { what: &'static str, row: usize },

    #[error("ZeroNormInput: cosine of a zero-norm vector is undefined")]
    ZeroNormInput,

    #[error("LengthMismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("KTooLarge: k = {k} but only {available} other images exist")]
    KTooLarge { k: usize, available: usize },

    #[error("IndexOutOfRange: {what} index {index} not in [0, {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("RankingTooShort: ranking for label {label} has {len} entries, need {k}")]
    RankingTooShort { label: usize, len: usize, k: usize },

    #[error("SeedEmpty: every ranking is empty")]
    SeedEmpty,

    #[error("MissingGroundTruth: store has no ground_truth labels")]
    MissingGroundTruth,

    #[error("DimensionTooSmall: {0}")]
    DimensionTooSmall(String),

    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),

    #[error("InvalidFormat: {}: {reason}", path.display())]
    InvalidFormat { path: PathBuf, reason: String },

    #[error("IoFailure: {}: {source}", path.display())]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short class name, the prefix of the rendered message.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "MissingFile",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NonFiniteValue(_) | Error::Divergence(_) => "NonFiniteValue",
            Error::ZeroNormRow { .. } => "ZeroNormRow",
            Error::ZeroNormInput => "ZeroNormInput",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::KTooLarge { .. } => "KTooLarge",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::RankingTooShort { .. } => "RankingTooShort",
            Error::SeedEmpty => "SeedEmpty",
            Error::MissingGroundTruth => "MissingGroundTruth",
            Error::DimensionTooSmall(_) => "DimensionTooSmall",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::InvalidFormat { .. } => "InvalidFormat",
            Error::IoFailure { .. } => "IoFailure",
        }
    }

    /// Divergence during training, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Divergence(_))
    }

    /// Read failure; a missing path becomes `MissingFile`.
    pub fn read_io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::IoFailure { path, source }
        }
    }
}

pub fn write_io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
    Error::IoFailure {
        path: path.into(),
        source,
    }
}
