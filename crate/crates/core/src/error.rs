use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the matching pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("invalid mesh: face {face}: {msg}")]
    InvalidFace { face: usize, msg: String },

    #[error("invalid mesh: edge ({0}, {1}) is shared by more than two faces")]
    NonManifoldEdge(usize, usize),

    #[error("invalid mesh: vertex {0} is not connected to vertex 0")]
    Disconnected(usize),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("triangle {0} is numerically degenerate")]
    DegenerateTriangle(usize),

    #[error("eigensolver: {0}")]
    Eigen(String),

    #[error("region {region}: {msg}")]
    InvalidRegion { region: usize, msg: String },

    #[error("no regions detected")]
    NoRegions,

    #[error("region {0} has no feasible partner; relax max_ratio")]
    NoFeasiblePartner(usize),

    #[error("assignment infeasible: {0}")]
    Infeasible(String),

    #[error("solver diverged: objective became {0}")]
    Diverged(f64),

    #[error("svd failed to converge")]
    Svd,

    #[error("linear program: {0}")]
    LinearProgram(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn dims(expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
