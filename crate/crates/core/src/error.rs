use std::fmt;

use thiserror::Error;

/// Which side of a binary labelling ran out of data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairClass {
    Positive,
    Negative,
}

impl fmt::Display for PairClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairClass::Positive => f.write_str("positive"),
            PairClass::Negative => f.write_str("negative"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("cannot pool an empty set of features")]
    EmptyPool,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid temporal window: length {length}, stride {stride}")]
    InvalidWindow { length: i64, stride: i64 },
    #[error("no {0} pairs available for calibration")]
    MissingClass(PairClass),
    #[error("sampler exhausted: no eligible {0} pairs")]
    SamplerExhausted(PairClass),
    #[error("step {step} is outside the schedule of {total} steps")]
    InvalidStep { step: usize, total: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("{n} items exceed the exact solver cap of {cap}")]
    TooLargeForExact { n: usize, cap: usize },
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("hypothesis contains {0} detections absent from the ground truth")]
    UniverseMismatch(usize),
    #[error("scoring pair ({i}, {j}) failed: {source}")]
    Pair {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
