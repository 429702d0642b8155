use std::collections::HashSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive token span `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }

    /// True when the spans cross without nesting.
    pub fn partially_overlaps(&self, other: &Span) -> bool {
        (self.start < other.start && other.start <= self.end && self.end < other.end)
            || (other.start < self.start && self.start <= other.end && other.end < self.end)
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.start, self.end)
    }
}

/// Non-referring expression type. `Nr` is the collapsed single class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NrType {
    Expletive,
    Predicate,
    Quantifier,
    Coordination,
    Idiom,
    #[serde(rename = "NR")]
    Nr,
}

impl NrType {
    pub const FINE: [NrType; 5] = [
        NrType::Expletive,
        NrType::Predicate,
        NrType::Quantifier,
        NrType::Coordination,
        NrType::Idiom,
    ];

    pub fn collapse(self) -> NrType {
        NrType::Nr
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NrType::Expletive => "Expletive",
            NrType::Predicate => "Predicate",
            NrType::Quantifier => "Quantifier",
            NrType::Coordination => "Coordination",
            NrType::Idiom => "Idiom",
            NrType::Nr => "NR",
        }
    }

    pub fn fine_index(self) -> Option<usize> {
        NrType::FINE.iter().position(|&t| t == self)
    }
}

impl fmt::Display for NrType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NrType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "Expletive" | "expletive" => NrType::Expletive,
            "Predicate" | "predicate" | "predicative" => NrType::Predicate,
            "Quantifier" | "quantifier" => NrType::Quantifier,
            "Coordination" | "coordination" => NrType::Coordination,
            "Idiom" | "idiom" => NrType::Idiom,
            "NR" | "nr" | "non-referring" => NrType::Nr,
            other => return Err(format!("unknown non-referring type `{other}`")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub sentence: usize,
    pub speaker: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub doc_key: String,
    pub genre: String,
    pub tokens: Vec<Token>,
    pub gold_clusters: Vec<Vec<Span>>,
    pub gold_nonreferring: Vec<(Span, NrType)>,
}

impl Document {
    /// Builds a document from sentences of tokens with a single speaker.
    pub fn from_sentences(doc_key: &str, genre: &str, sentences: &[Vec<&str>]) -> Self {
        let tokens = sentences
            .iter()
            .enumerate()
            .flat_map(|(s, words)| {
                words.iter().map(move |w| Token {
                    text: w.to_string(),
                    sentence: s,
                    speaker: "-".into(),
                })
            })
            .collect();
        Document {
            doc_key: doc_key.into(),
            genre: genre.into(),
            tokens,
            gold_clusters: Vec::new(),
            gold_nonreferring: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token ranges of each sentence, in order.
    pub fn sentences(&self) -> Vec<Range<usize>> {
        let mut out: Vec<Range<usize>> = Vec::new();
        for (i, t) in self.tokens.iter().enumerate() {
            match out.last_mut() {
                Some(r) if self.tokens[r.start].sentence == t.sentence => r.end = i + 1,
                _ => out.push(i..i + 1),
            }
        }
        out
    }

    fn invalid(&self, msg: impl Into<String>) -> Error {
        Error::InvalidDocument {
            doc: self.doc_key.clone(),
            msg: msg.into(),
        }
    }

    /// Checks token, span, and annotation invariants.
    pub fn validate(&self) -> Result<()> {
        let mut prev_sentence = 0;
        for (i, t) in self.tokens.iter().enumerate() {
            if t.text.is_empty() {
                return Err(self.invalid(format!("token {i} is empty")));
            }
            if t.sentence < prev_sentence || t.sentence > prev_sentence + 1 || (i == 0 && t.sentence != 0) {
                return Err(self.invalid(format!("token {i} has out-of-order sentence index")));
            }
            prev_sentence = t.sentence;
        }
        let n = self.tokens.len();
        let check = |s: &Span| -> Result<()> {
            if s.start > s.end || s.end >= n {
                return Err(self.invalid(format!("span {s} outside 0..{n}")));
            }
            Ok(())
        };
        let mut seen = HashSet::new();
        for cluster in &self.gold_clusters {
            if cluster.is_empty() {
                return Err(self.invalid("empty cluster"));
            }
            for s in cluster {
                check(s)?;
                if !seen.insert(*s) {
                    return Err(self.invalid(format!("span {s} appears in more than one cluster slot")));
                }
            }
        }
        let mut nr_seen = HashSet::new();
        for (s, _) in &self.gold_nonreferring {
            check(s)?;
            if seen.contains(s) {
                return Err(self.invalid(format!("span {s} is both in a cluster and non-referring")));
            }
            if !nr_seen.insert(*s) {
                return Err(self.invalid(format!("non-referring span {s} listed twice")));
            }
        }
        Ok(())
    }

    /// Copy with singleton clusters and non-referring markables removed.
    pub fn without_singletons_and_nonreferring(&self) -> Document {
        Document {
            gold_clusters: self
                .gold_clusters
                .iter()
                .filter(|c| c.len() > 1)
                .cloned()
                .collect(),
            gold_nonreferring: Vec::new(),
            ..self.clone()
        }
    }

    /// Splits at sentence boundaries into segments of at most `max_tokens`
    /// tokens (a single longer sentence stays whole). Annotations crossing
    /// a segment boundary are dropped.
    pub fn split(&self, max_tokens: usize) -> Vec<Document> {
        if self.len() <= max_tokens || max_tokens == 0 {
            return vec![self.clone()];
        }
        let mut ranges: Vec<Range<usize>> = Vec::new();
        for s in self.sentences() {
            match ranges.last_mut() {
                Some(r) if s.end - r.start <= max_tokens => r.end = s.end,
                _ => ranges.push(s),
            }
        }
        ranges
            .into_iter()
            .enumerate()
            .map(|(k, r)| {
                let inside = |s: &Span| r.start <= s.start && s.end < r.end;
                let shift = |s: &Span| Span::new(s.start - r.start, s.end - r.start);
                let first_sentence = self.tokens[r.start].sentence;
                Document {
                    doc_key: format!("{}/{k}", self.doc_key),
                    genre: self.genre.clone(),
                    tokens: self.tokens[r.clone()]
                        .iter()
                        .map(|t| Token {
                            sentence: t.sentence - first_sentence,
                            ..t.clone()
                        })
                        .collect(),
                    gold_clusters: self
                        .gold_clusters
                        .iter()
                        .map(|c| c.iter().filter(|s| inside(s)).map(shift).collect::<Vec<_>>())
                        .filter(|c| !c.is_empty())
                        .collect(),
                    gold_nonreferring: self
                        .gold_nonreferring
                        .iter()
                        .filter(|(s, _)| inside(s))
                        .map(|(s, t)| (shift(s), *t))
                        .collect(),
                }
            })
            .collect()
    }
}
