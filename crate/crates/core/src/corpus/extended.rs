//! One-document-per-line JSON format carrying singletons and non-referring
//! markables:
//!
//! ```json
//! {"doc_key": "d1", "genre": "nw",
//!  "sentences": [["It", "rained", "."]], "speakers": [["-", "-", "-"]],
//!  "clusters": [[[0, 0]]], "nonreferring": [[0, 0, "Expletive"]]}
//! ```

use serde::{Deserialize, Serialize};

use super::document::{Document, NrType, Span, Token};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Line {
    doc_key: String,
    #[serde(default)]
    genre: String,
    sentences: Vec<Vec<String>>,
    #[serde(default)]
    speakers: Vec<Vec<String>>,
    #[serde(default)]
    clusters: Vec<Vec<[usize; 2]>>,
    #[serde(default)]
    nonreferring: Vec<(usize, usize, String)>,
}

pub fn read_extended_json(text: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let line: Line = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        docs.push(from_line(line, lineno)?);
    }
    Ok(docs)
}

fn from_line(line: Line, lineno: usize) -> Result<Document> {
    if !line.speakers.is_empty() {
        let shape_ok = line.speakers.len() == line.sentences.len()
            && line
                .speakers
                .iter()
                .zip(&line.sentences)
                .all(|(a, b)| a.len() == b.len());
        if !shape_ok {
            return Err(Error::Parse {
                line: lineno,
                msg: "speakers do not align with sentences".into(),
            });
        }
    }
    let mut tokens = Vec::new();
    for (s, words) in line.sentences.iter().enumerate() {
        for (k, w) in words.iter().enumerate() {
            let speaker = line
                .speakers
                .get(s)
                .map_or_else(|| "-".to_string(), |sp| sp[k].clone());
            tokens.push(Token {
                text: w.clone(),
                sentence: s,
                speaker,
            });
        }
    }
    let mut nonreferring = Vec::with_capacity(line.nonreferring.len());
    for (s, e, ty) in line.nonreferring {
        let ty: NrType = ty.parse().map_err(|msg| Error::Parse { line: lineno, msg })?;
        nonreferring.push((span_checked(s, e, lineno)?, ty));
    }
    let mut clusters = Vec::with_capacity(line.clusters.len());
    for c in line.clusters {
        clusters.push(
            c.into_iter()
                .map(|[s, e]| span_checked(s, e, lineno))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let doc = Document {
        doc_key: line.doc_key,
        genre: line.genre,
        tokens,
        gold_clusters: clusters,
        gold_nonreferring: nonreferring,
    };
    doc.validate()?;
    Ok(doc)
}

fn span_checked(s: usize, e: usize, line: usize) -> Result<Span> {
    if s > e {
        return Err(Error::Parse {
            line,
            msg: format!("span start {s} after end {e}"),
        });
    }
    Ok(Span::new(s, e))
}

pub fn to_extended_line(doc: &Document) -> String {
    let ranges = doc.sentences();
    let line = Line {
        doc_key: doc.doc_key.clone(),
        genre: doc.genre.clone(),
        sentences: ranges
            .iter()
            .map(|r| doc.tokens[r.clone()].iter().map(|t| t.text.clone()).collect())
            .collect(),
        speakers: ranges
            .iter()
            .map(|r| doc.tokens[r.clone()].iter().map(|t| t.speaker.clone()).collect())
            .collect(),
        clusters: doc
            .gold_clusters
            .iter()
            .map(|c| c.iter().map(|s| [s.start, s.end]).collect())
            .collect(),
        nonreferring: doc
            .gold_nonreferring
            .iter()
            .map(|(s, t)| (s.start, s.end, t.as_str().to_string()))
            .collect(),
    };
    serde_json::to_string(&line).expect("document serializes")
}

pub fn write_extended_json(docs: &[Document]) -> String {
    let mut out = String::new();
    for d in docs {
        out.push_str(&to_extended_line(d));
        out.push('\n');
    }
    out
}
