//! Inference: documents in, clusters and non-referring markables out.

use crate::corpus::{Document, Span};
use crate::decoder::{resolve, Decoded, ResolveOptions};
use crate::encoder::detect_mentions;
use crate::error::Result;
use crate::model::{Embeddings, Model};
use crate::numcore::{Graph, Mode};
use crate::par::{par_map, Execution};
use crate::scorer::NeuralScorer;

/// Decoder output together with the mentions it ran over.
#[derive(Clone, Debug, Default)]
pub struct Prediction {
    pub mentions: Vec<Span>,
    pub decoded: Decoded,
}

pub fn predict_document(
    model: &Model,
    emb: &Embeddings,
    doc: &Document,
    opts: &ResolveOptions,
) -> Result<Prediction> {
    opts.validate()?;
    let mut g = Graph::new(&model.params, Mode::Infer, 0);
    let Some(mentions) = detect_mentions(&mut g, model, doc, emb)? else {
        return Ok(Prediction::default());
    };
    let mut scorer = NeuralScorer::new(&mut g, model, doc, &mentions, false)?;
    let decoded = resolve(&mut scorer, &mentions.spans, opts)?;
    Ok(Prediction {
        mentions: mentions.spans,
        decoded,
    })
}

/// `doc` with its annotations replaced by the prediction.
pub fn annotate(doc: &Document, pred: &Prediction) -> Document {
    Document {
        gold_clusters: pred.decoded.resolution.clusters.clone(),
        gold_nonreferring: pred.decoded.resolution.nonreferring.clone(),
        ..doc.clone()
    }
}

/// Predicts every document, preserving order.
pub fn predict_corpus(
    model: &Model,
    emb: &Embeddings,
    docs: &[Document],
    opts: &ResolveOptions,
    exec: Execution,
) -> Result<Vec<Document>> {
    par_map(docs, exec, |d| {
        predict_document(model, emb, d, opts).map(|p| annotate(d, &p))
    })
    .into_iter()
    .collect()
}
