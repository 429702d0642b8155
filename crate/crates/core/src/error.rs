use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the resolution pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("tensor shape {shape:?} does not hold {len} values")]
    TensorSize { shape: Vec<usize>, len: usize },

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("softmax over an empty vector")]
    EmptySoftmax,

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("empty gold candidate set")]
    EmptyGold,

    #[error("cluster size must be at least 1, got {0}")]
    ClusterSize(i64),

    #[error("distance must be non-negative, got {0}")]
    Distance(i64),

    #[error("unknown cluster state {0}")]
    UnknownState(usize),

    #[error("{doc}: line {line}: unbalanced coreference annotation for entity {entity}")]
    Unbalanced {
        doc: String,
        line: usize,
        entity: String,
    },

    #[error("line {line}: expected at least {expected} columns, found {found}")]
    Columns {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("document {doc}: {msg}")]
    InvalidDocument { doc: String, msg: String },

    #[error("{path}: line {line}: embedding has dimension {found}, expected {expected}")]
    EmbeddingDim {
        path: String,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("no contextual vector for token {index} of document {doc}")]
    MissingContextual { doc: String, index: usize },

    #[error("document keys differ: key `{key}` vs response `{response}`")]
    DocKeyMismatch { key: String, response: String },

    #[error("document sets differ: missing from response {missing_in_response:?}, missing from key {missing_in_key:?}")]
    DocKeySets {
        missing_in_response: Vec<String>,
        missing_in_key: Vec<String>,
    },

    #[error("duplicate span ({0}, {1}) in one partition")]
    DuplicateSpan(usize, usize),

    #[error("checkpoint parameters do not match the model: {0:?}")]
    CheckpointMismatch(Vec<String>),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
