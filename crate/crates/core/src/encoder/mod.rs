//! From tokens to scored, pruned mention candidates.

use crate::corpus::{Document, Span};
use crate::error::{Error, Result};
use crate::model::{Embeddings, Model};
use crate::numcore::{softmax, Graph, Var};

/// All spans of width at most `max_width` in `(start, end)` order.
pub fn enumerate_spans(t: usize, max_width: usize) -> Vec<Span> {
    let mut out = Vec::new();
    for s in 0..t {
        for e in s..t.min(s + max_width) {
            out.push(Span::new(s, e));
        }
    }
    out
}

/// Number of candidates kept for a document of `t` tokens.
pub fn prune_budget(ratio: f64, t: usize) -> usize {
    // the small slack keeps e.g. 0.3 * 10 from flooring to 2
    (ratio * t as f64 + 1e-9).floor() as usize
}

/// Greedy top-⌊ratio·t⌋ selection by descending score, skipping any span
/// that partially overlaps one already kept. Ties go to the earlier start,
/// then the shorter span. Returns indices into `spans` in text order.
pub fn prune_spans(spans: &[Span], scores: &[f64], ratio: f64, t: usize) -> Vec<usize> {
    debug_assert_eq!(spans.len(), scores.len());
    let budget = prune_budget(ratio, t);
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(spans[a].start.cmp(&spans[b].start))
            .then(spans[a].end.cmp(&spans[b].end))
    });
    let mut kept: Vec<usize> = Vec::with_capacity(budget);
    for i in order {
        if kept.len() >= budget {
            break;
        }
        if kept.iter().all(|&k| !spans[k].partially_overlaps(&spans[i])) {
            kept.push(i);
        }
    }
    kept.sort_by_key(|&k| spans[k]);
    kept
}

/// Softmax attention over a span: returns the weights and the weighted sum
/// of `values`.
pub fn head_attention(scores: &[f64], values: &[&[f64]]) -> Result<(Vec<f64>, Vec<f64>)> {
    let w = softmax(scores)?;
    let dim = values.first().map_or(0, |v| v.len());
    let mut head = vec![0.0; dim];
    for (wk, v) in w.iter().zip(values) {
        for (h, x) in head.iter_mut().zip(*v) {
            *h += wk * x;
        }
    }
    Ok((w, head))
}

/// Token-level encodings of one document.
#[derive(Clone, Copy, Debug)]
pub struct TokenEncoding {
    /// Word+character inputs `x_t`, `[T, input_dim]`.
    pub inputs: Var,
    /// BiLSTM outputs `x*_t`, `[T, 2·lstm_size]`.
    pub contextual: Var,
}

/// Builds `x_t` and runs the BiLSTM sentence by sentence. Returns `None`
/// for an empty document.
pub fn encode_tokens(
    g: &mut Graph,
    model: &Model,
    doc: &Document,
    emb: &Embeddings,
) -> Result<Option<TokenEncoding>> {
    if doc.is_empty() {
        return Ok(None);
    }
    model.check_embeddings(emb)?;
    let words = g.input(emb.token_matrix(doc)?);
    let bytes: Vec<&[u8]> = doc.tokens.iter().map(|t| t.text.as_bytes()).collect();
    let chars = model.char_cnn.forward(g, &bytes)?;
    let x = g.concat_cols(&[words, chars])?;
    let inputs = g.dropout(x, model.config.embedding_dropout);
    let mut per_sentence = Vec::new();
    for r in doc.sentences() {
        let xs = g.slice_rows(inputs, r.start, r.len());
        per_sentence.push(model.lstm.forward(g, xs, model.config.lstm_dropout)?);
    }
    let contextual = g.concat_rows(&per_sentence)?;
    Ok(Some(TokenEncoding { inputs, contextual }))
}

/// `N*_i = [x*_s, x*_e, h*_i, φ(width)]` for each span, `[n, repr_dim]`.
pub fn span_representations(
    g: &mut Graph,
    model: &Model,
    enc: TokenEncoding,
    spans: &[Span],
) -> Result<Var> {
    let max_width = model.config.max_span_width;
    if let Some(s) = spans.iter().find(|s| s.width() > max_width) {
        return Err(Error::Config(format!("span {s} wider than {max_width}")));
    }
    let starts: Vec<usize> = spans.iter().map(|s| s.start).collect();
    let ends: Vec<usize> = spans.iter().map(|s| s.end).collect();
    let xs = g.gather_rows(enc.contextual, &starts);
    let xe = g.gather_rows(enc.contextual, &ends);
    let alpha = model
        .head_scorer
        .forward(g, enc.contextual, model.config.ffnn_dropout)?;
    let offsets = model.head_offsets.map(|p| g.param(p));
    let bounds: Vec<(usize, usize)> = spans.iter().map(|s| (s.start, s.end)).collect();
    let head = g.span_attention(alpha, enc.inputs, offsets, &bounds)?;
    let mut parts = vec![xs, xe, head];
    if let Some(w) = model.width_emb {
        let table = g.param(w);
        let widths: Vec<usize> = spans.iter().map(|s| s.width() - 1).collect();
        parts.push(g.gather_rows(table, &widths));
    }
    g.concat_cols(&parts)
}

/// `s_m` for each row of `reprs`, `[n, 1]`.
pub fn mention_scores(g: &mut Graph, model: &Model, reprs: Var) -> Result<Var> {
    model
        .mention_scorer
        .forward(g, reprs, model.config.ffnn_dropout)
}

/// Pruned mentions of one document.
#[derive(Clone, Debug)]
pub struct Mentions {
    /// Kept spans in text order.
    pub spans: Vec<Span>,
    /// `[k, repr_dim]`
    pub reprs: Var,
    /// `[k, 1]`
    pub scores: Var,
    /// Number of enumerated candidates before pruning.
    pub candidates: usize,
}

impl Mentions {
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }
}

/// Encodes, scores, and prunes; `None` when nothing survives.
pub fn detect_mentions(
    g: &mut Graph,
    model: &Model,
    doc: &Document,
    emb: &Embeddings,
) -> Result<Option<Mentions>> {
    let Some(enc) = encode_tokens(g, model, doc, emb)? else {
        return Ok(None);
    };
    let spans = enumerate_spans(doc.len(), model.config.max_span_width);
    let reprs = span_representations(g, model, enc, &spans)?;
    let scores = mention_scores(g, model, reprs)?;
    let kept = prune_spans(
        &spans,
        g.value(scores).data(),
        model.config.mention_ratio,
        doc.len(),
    );
    if kept.is_empty() {
        return Ok(None);
    }
    let reprs = g.gather_rows(reprs, &kept);
    let scores = g.gather_rows(scores, &kept);
    Ok(Some(Mentions {
        spans: kept.iter().map(|&k| spans[k]).collect(),
        reprs,
        scores,
        candidates: spans.len(),
    }))
}
