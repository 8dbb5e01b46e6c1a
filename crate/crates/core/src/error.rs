//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the pipeline.
#[derive(Error, Debug)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("out-of-range id {id} (n = {n})")]
    OutOfRangeId { id: i64, n: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid taxonomy tree: {0}")]
    InvalidTree(String),

    #[error("invalid cluster assignment: {0}")]
    InvalidAssignment(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("undefined homophily: graph has no edges")]
    UndefinedHomophily,

    #[error("node {0} is unlabeled but the operation requires full labels")]
    UnlabeledNode(usize),

    #[error("embedding row {0} is not unit-norm")]
    NotNormalized(usize),

    #[error("degenerate cluster: {0}")]
    DegenerateCluster(String),

    #[error("empty supervision: no labeled train nodes")]
    EmptySupervision,

    #[error("no viable target clusters: every cluster is below the size floor")]
    NoViableTargets,

    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },

    #[error("refiner error: {0}")]
    Refiner(#[from] crate::refiner::RefinerError),

    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
