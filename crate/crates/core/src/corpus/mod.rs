//! Documents, corpus readers and writers, embeddings, and feature buckets.

mod buckets;
mod conll;
mod document;
mod embeddings;
mod extended;

use std::fs;
use std::path::Path;

pub use buckets::{bucket_cluster_size, bucket_distance, DISTANCE_BUCKETS, SIZE_BUCKETS};
pub use conll::{read_conll2012, write_conll2012, MIN_COLUMNS};
pub use document::{Document, NrType, Span, Token};
pub use embeddings::{
    hashed_vector, load_embeddings, parse_contextual, parse_static, reduce_layers, EmbeddingKind,
    EmbeddingSpec, EmbeddingTable, LayerReducer, CONTEXTUAL_LAYERS,
};
pub use extended::{read_extended_json, to_extended_line, write_extended_json};

use crate::error::{Error, Result};

/// Reads a corpus file, choosing the format by content: CoNLL-2012 when the
/// first non-blank line starts with `#begin document`, JSON lines otherwise.
pub fn read_corpus(path: &Path) -> Result<Vec<Document>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if first.trim_start().starts_with("#begin document") {
        read_conll2012(&text)
    } else {
        read_extended_json(&text)
    }
}
