use crate::corpus::ChunkId;
use crate::tree::NodeId;

/// Errors produced by the filtering library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty set has no mean")]
    EmptySet,

    #[error("malformed tree: {0}")]
    MalformedTree(String),

    #[error("node not in tree: {0}")]
    NodeNotInTree(NodeId),

    #[error("chunk not found: {0}")]
    ChunkNotFound(ChunkId),

    #[error("degenerate embedding (zero norm)")]
    DegenerateEmbedding,

    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("nothing to merge: fewer than two clusters")]
    NothingToMerge,

    #[error("no data")]
    NoData,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("http error: {0}")]
    Http(String),
}

pub type Result<T> = std::result::Result<T, Error>;
