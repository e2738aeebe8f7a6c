use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("non-finite value produced by {0}")]
    NonFiniteValue(&'static str),

    #[error("backward requires a scalar root")]
    NotScalarRoot,

    #[error("training loss diverged at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("graph has no edges to measure homophily over")]
    EmptyEdgeSet,

    #[error("invalid probability configuration: {0}")]
    InvalidProbability(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no admissible node pair left to perturb")]
    NoAdmissiblePair,

    #[error("ran out of {0} candidates")]
    ExhaustedCandidates(&'static str),

    #[error("graph is disconnected")]
    DisconnectedGraph,

    #[error("graph is bipartite")]
    BipartiteGraph,

    #[error("{}:{line}: {message}", file.display())]
    Schema {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("self-loop on node {0} in input")]
    SelfLoopInInput(usize),

    #[error("index {index} out of range for {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("replaying the trace does not reproduce the stored adjacency: {0}")]
    ReplayMismatch(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::NonFiniteValue(_) => "NonFiniteValue",
            Error::NotScalarRoot => "NotScalarRoot",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::EmptyEdgeSet => "EmptyEdgeSet",
            Error::InvalidProbability(_) => "InvalidProbability",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::NoAdmissiblePair => "NoAdmissiblePair",
            Error::ExhaustedCandidates(_) => "ExhaustedCandidates",
            Error::DisconnectedGraph => "DisconnectedGraph",
            Error::BipartiteGraph => "BipartiteGraph",
            Error::Schema { .. } => "SchemaError",
            Error::DuplicateEdge(..) => "DuplicateEdge",
            Error::SelfLoopInInput(_) => "SelfLoopInInput",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::ReplayMismatch(_) => "ReplayMismatch",
            Error::Io { .. } => "Io",
            Error::Json { .. } => "Json",
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }
}
