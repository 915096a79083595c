use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = IkError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum IkError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("failed to write output: {0}")]
    Output(String),

    #[error("bone `{bone}`: {reason}")]
    InvalidBone { bone: String, reason: String },

    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("unknown bone `{0}`")]
    UnknownBone(String),

    #[error("bone index {index} out of range (skeleton has {count} bones)")]
    BoneIndex { index: usize, count: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid objective term `{term}`: {reason}")]
    InvalidTerm { term: String, reason: String },

    #[error("objective term `{term}` produced a non-finite value")]
    NonFinite { term: String },

    #[error("non-finite gradient component at index {index}")]
    NonFiniteGradient { index: usize },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid kinematic chain: {0}")]
    InvalidChain(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("benchmark stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<IkError>,
    },

    #[error("bounds violated at index {index}: {value} not in [{lower}, {upper}]")]
    BoundsViolation {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
}

impl IkError {
    pub(crate) fn bone(bone: impl Into<String>, reason: impl Into<String>) -> Self {
        IkError::InvalidBone {
            bone: bone.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn term(term: impl Into<String>, reason: impl Into<String>) -> Self {
        IkError::InvalidTerm {
            term: term.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        IkError::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
