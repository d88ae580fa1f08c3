use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong inside the core crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid shape for {op}: {detail}")]
    InvalidShape { op: &'static str, detail: String },

    #[error("non-finite value produced by {op} (node {node})")]
    NonFinite { op: &'static str, node: usize },

    #[error("backward requires a scalar loss of shape [1], got {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("backward already ran on this graph; call reset() before running it again")]
    BackwardTwice,

    #[error("unknown node {0}")]
    UnknownNode(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid depth {depth} for {shape} branches: depth must be {rule}")]
    InvalidDepth {
        depth: usize,
        shape: &'static str,
        rule: &'static str,
    },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("slice [{l}, {upper}) is not a single-stage slice: {reason}")]
    InvalidSlice {
        l: usize,
        upper: usize,
        reason: String,
    },

    #[error("non-finite training loss at iteration {iter}")]
    NanLoss { iter: usize },

    #[error("{path}: expected {expected} bytes, found {actual}")]
    FileSize {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{path}: corrupt record at byte offset {offset}: {detail}")]
    CorruptRecord {
        path: PathBuf,
        offset: u64,
        detail: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
