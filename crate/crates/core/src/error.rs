use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("graph load error: {0}")]
    Load(String),

    #[error("node {0} not found")]
    NodeNotFound(u64),

    #[error("node {to} unreachable from node {from}")]
    Unreachable { from: u64, to: u64 },

    #[error("no road node within {radius_km} km of the trajectory")]
    EmptySubgraph { radius_km: f64 },

    #[error("degenerate edge {u}-{v}: length {length_km} km")]
    DegenerateEdge { u: u64, v: u64, length_km: f64 },

    #[error("generation failed: {0}")]
    GenerationFailed(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("optimizer error: {0}")]
    Optimizer(String),

    #[error("sequence of length {len} exceeds max_len {max_len}")]
    SequenceTooLong { len: usize, max_len: usize },

    #[error("training error: {0}")]
    Training(String),

    #[error("reconstruction error: {0}")]
    Reconstruction(String),

    #[error("point {index} has no road candidate within the search radius")]
    UnmatchedPoint { index: usize },

    #[error("no feasible transition into point {index}; trajectory chain is broken")]
    BrokenChain { index: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short stable identifier used by the CLI and the C API.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Load(_) => "load",
            Error::NodeNotFound(_) => "not_found",
            Error::Unreachable { .. } => "unreachable",
            Error::EmptySubgraph { .. } => "empty_subgraph",
            Error::DegenerateEdge { .. } => "degenerate_edge",
            Error::GenerationFailed(_) => "generation_failed",
            Error::Split(_) => "split",
            Error::Shape(_) => "shape",
            Error::Numeric(_) => "numeric",
            Error::Optimizer(_) => "optimizer",
            Error::SequenceTooLong { .. } => "sequence_too_long",
            Error::Training(_) => "training",
            Error::Reconstruction(_) => "reconstruction",
            Error::UnmatchedPoint { .. } => "unmatched_point",
            Error::BrokenChain { .. } => "broken_chain",
            Error::Checkpoint(_) => "checkpoint",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
