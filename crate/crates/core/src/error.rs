//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("dataset file {path}: {message}")]
    Format { path: String, message: String },

    #[error("dataset file {path}, line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("kernel density estimation needs at least 2 points, got {0}")]
    TooFewPoints(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("divergence matrix: {0}")]
    InvalidDivergenceMatrix(String),

    #[error("cannot select {requested} representatives from {available} worlds")]
    RepresentativeCount { requested: usize, available: usize },

    #[error("representative loss is undefined for an empty representative set")]
    EmptyRepresentatives,

    #[error("all points coincide; kernel width cannot be inferred")]
    DegenerateDistances,

    #[error("vertex {row} is isolated (zero degree); the similarity graph is disconnected")]
    IsolatedVertex { row: usize },

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:.3e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("clustering inputs: {0}")]
    InvalidClusteringInput(String),

    #[error("report output {path}: {source}")]
    ReportIo {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("report serialization: {0}")]
    ReportSerialize(#[from] serde_json::Error),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Tags an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
