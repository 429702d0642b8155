//! Word-level input vectors: static text tables, precomputed contextual
//! sidecars, and deterministic hashed vectors.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Static,
    Contextual,
    Hashed,
}

/// How the last four contextual layers are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LayerReducer {
    #[default]
    Concat,
    Mean,
}

/// Number of trailing contextual layers that are combined.
pub const CONTEXTUAL_LAYERS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub kind: EmbeddingKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Dimension of hashed vectors; ignored for file-backed kinds.
    #[serde(default = "default_hashed_dim")]
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub reducer: LayerReducer,
}

fn default_hashed_dim() -> usize {
    50
}

impl EmbeddingSpec {
    pub fn hashed(dim: usize, seed: u64) -> Self {
        EmbeddingSpec {
            kind: EmbeddingKind::Hashed,
            path: None,
            dim,
            seed,
            reducer: LayerReducer::Concat,
        }
    }
}

#[derive(Clone, Debug)]
pub enum EmbeddingTable {
    /// Token → vector; out-of-vocabulary tokens map to the zero vector.
    Static {
        vectors: HashMap<String, Vec<f64>>,
        dim: usize,
    },
    /// Per-document, per-token vectors already reduced over layers.
    Contextual {
        docs: HashMap<String, Vec<Vec<f64>>>,
        dim: usize,
    },
    /// Unit-norm pseudo-random vector seeded by a hash of the token string.
    Hashed { dim: usize, seed: u64 },
}

#[derive(Deserialize)]
struct ContextualLine {
    doc_key: String,
    /// `layers[layer][token][component]`
    layers: Vec<Vec<Vec<f64>>>,
}

pub fn load_embeddings(spec: &EmbeddingSpec) -> Result<EmbeddingTable> {
    match spec.kind {
        EmbeddingKind::Hashed => Ok(EmbeddingTable::Hashed {
            dim: spec.dim,
            seed: spec.seed,
        }),
        EmbeddingKind::Static => {
            let path = required_path(spec)?;
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_static(&text, &path.display().to_string())
        }
        EmbeddingKind::Contextual => {
            let path = required_path(spec)?;
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_contextual(&text, &path.display().to_string(), spec.reducer)
        }
    }
}

fn required_path(spec: &EmbeddingSpec) -> Result<&Path> {
    spec.path
        .as_deref()
        .ok_or_else(|| Error::Config(format!("{:?} embeddings need a path", spec.kind)))
}

/// Parses `token v1 .. vd` lines.
pub fn parse_static(text: &str, origin: &str) -> Result<EmbeddingTable> {
    let mut vectors = HashMap::new();
    let mut dim = None;
    for (k, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values = parts
            .map(|p| {
                p.parse::<f64>().map_err(|e| Error::Parse {
                    line: k + 1,
                    msg: format!("{origin}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let expected = *dim.get_or_insert(values.len());
        if values.len() != expected {
            return Err(Error::EmbeddingDim {
                path: origin.into(),
                line: k + 1,
                expected,
                found: values.len(),
            });
        }
        vectors.insert(token.to_string(), values);
    }
    Ok(EmbeddingTable::Static {
        vectors,
        dim: dim.unwrap_or(0),
    })
}

/// Parses contextual sidecar lines `{"doc_key": .., "layers": [..]}`.
pub fn parse_contextual(text: &str, origin: &str, reducer: LayerReducer) -> Result<EmbeddingTable> {
    let mut docs = HashMap::new();
    let mut dim = None;
    for (k, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: ContextualLine = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line: k + 1,
            msg: format!("{origin}: {e}"),
        })?;
        if line.layers.len() < CONTEXTUAL_LAYERS {
            return Err(Error::Parse {
                line: k + 1,
                msg: format!("{origin}: need {CONTEXTUAL_LAYERS} layers, found {}", line.layers.len()),
            });
        }
        let layers = &line.layers[line.layers.len() - CONTEXTUAL_LAYERS..];
        let n_tokens = layers[0].len();
        let mut per_token = Vec::with_capacity(n_tokens);
        for t in 0..n_tokens {
            let mut parts = Vec::with_capacity(CONTEXTUAL_LAYERS);
            for layer in layers {
                let v = layer.get(t).ok_or_else(|| Error::Parse {
                    line: k + 1,
                    msg: format!("{origin}: layers disagree on token count"),
                })?;
                parts.push(v.as_slice());
            }
            let combined = reduce_layers(&parts, reducer);
            let expected = *dim.get_or_insert(combined.len());
            if combined.len() != expected || parts.iter().any(|p| p.len() != parts[0].len()) {
                return Err(Error::EmbeddingDim {
                    path: origin.into(),
                    line: k + 1,
                    expected,
                    found: combined.len(),
                });
            }
            per_token.push(combined);
        }
        docs.insert(line.doc_key, per_token);
    }
    Ok(EmbeddingTable::Contextual {
        docs,
        dim: dim.unwrap_or(0),
    })
}

pub fn reduce_layers(layers: &[&[f64]], reducer: LayerReducer) -> Vec<f64> {
    match reducer {
        LayerReducer::Concat => layers.iter().flat_map(|l| l.iter().copied()).collect(),
        LayerReducer::Mean => {
            let d = layers.first().map_or(0, |l| l.len());
            let mut out = vec![0.0; d];
            for l in layers {
                for (o, v) in out.iter_mut().zip(*l) {
                    *o += v;
                }
            }
            let n = layers.len() as f64;
            out.iter_mut().for_each(|o| *o /= n);
            out
        }
    }
}

/// 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn hashed_vector(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()) ^ seed.rotate_left(17));
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        match self {
            EmbeddingTable::Static { dim, .. }
            | EmbeddingTable::Contextual { dim, .. }
            | EmbeddingTable::Hashed { dim, .. } => *dim,
        }
    }

    /// Vector for token `index` (surface form `token`) of document `doc_key`.
    pub fn vector(&self, doc_key: &str, index: usize, token: &str) -> Result<Cow<'_, [f64]>> {
        match self {
            EmbeddingTable::Static { vectors, dim } => Ok(vectors
                .get(token)
                .or_else(|| vectors.get(&token.to_lowercase()))
                .map_or_else(|| Cow::Owned(vec![0.0; *dim]), |v| Cow::Borrowed(v.as_slice()))),
            EmbeddingTable::Hashed { dim, seed } => Ok(Cow::Owned(hashed_vector(token, *dim, *seed))),
            EmbeddingTable::Contextual { docs, .. } => docs
                .get(doc_key)
                .and_then(|d| d.get(index))
                .map(|v| Cow::Borrowed(v.as_slice()))
                .ok_or_else(|| Error::MissingContextual {
                    doc: doc_key.to_string(),
                    index,
                }),
        }
    }
}
