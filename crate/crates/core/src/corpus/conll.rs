//! CoNLL-2012 column format.
//!
//! Documents are delimited by `#begin document (<name>); part <p>` and
//! `#end document`; sentences by blank lines. The word is column 4, the
//! speaker column 10, and the coreference annotation the last column.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::document::{Document, Span, Token};
use crate::error::{Error, Result};

/// Minimum number of whitespace-separated columns on a token line.
pub const MIN_COLUMNS: usize = 12;

pub fn read_conll2012(text: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut cur: Option<Builder> = None;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("#begin document") {
            if let Some(b) = cur.take() {
                docs.push(b.finish(lineno)?);
            }
            cur = Some(Builder::new(parse_header(rest, lineno)?));
        } else if trimmed.starts_with("#end document") {
            match cur.take() {
                Some(b) => docs.push(b.finish(lineno)?),
                None => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "#end document without #begin".into(),
                    })
                }
            }
        } else if trimmed.is_empty() {
            if let Some(b) = cur.as_mut() {
                b.sentence_break();
            }
        } else if trimmed.starts_with('#') {
            continue;
        } else {
            let b = cur.as_mut().ok_or_else(|| Error::Parse {
                line: lineno,
                msg: "token line outside a document".into(),
            })?;
            let cols: Vec<&str> = trimmed.split_whitespace().collect();
            if cols.len() < MIN_COLUMNS {
                return Err(Error::Columns {
                    line: lineno,
                    expected: MIN_COLUMNS,
                    found: cols.len(),
                });
            }
            b.token(cols[3], cols[9], cols[cols.len() - 1], lineno)?;
        }
    }
    if let Some(b) = cur {
        let n = text.lines().count();
        docs.push(b.finish(n)?);
    }
    Ok(docs)
}

fn parse_header(rest: &str, line: usize) -> Result<(String, String)> {
    let bad = || Error::Parse {
        line,
        msg: "malformed #begin document header".into(),
    };
    let open = rest.find('(').ok_or_else(bad)?;
    let close = rest.rfind(')').ok_or_else(bad)?;
    if close < open {
        return Err(bad());
    }
    let name = rest[open + 1..close].to_string();
    let part = rest[close + 1..]
        .trim_start_matches(';')
        .trim()
        .strip_prefix("part")
        .map(|p| p.trim().to_string())
        .unwrap_or_else(|| "000".to_string());
    Ok((name, part))
}

struct Builder {
    doc: Document,
    sentence: usize,
    sentence_has_tokens: bool,
    open: HashMap<String, Vec<usize>>,
    clusters: Vec<(String, Vec<Span>)>,
}

impl Builder {
    fn new((name, part): (String, String)) -> Self {
        let genre = match name.split_once('/') {
            Some((g, _)) => g.to_string(),
            None => "-".to_string(),
        };
        Builder {
            doc: Document {
                doc_key: format!("{name}#{part}"),
                genre,
                tokens: Vec::new(),
                gold_clusters: Vec::new(),
                gold_nonreferring: Vec::new(),
            },
            sentence: 0,
            sentence_has_tokens: false,
            open: HashMap::new(),
            clusters: Vec::new(),
        }
    }

    fn sentence_break(&mut self) {
        if self.sentence_has_tokens {
            self.sentence += 1;
            self.sentence_has_tokens = false;
        }
    }

    fn unbalanced(&self, line: usize, entity: &str) -> Error {
        Error::Unbalanced {
            doc: self.doc.doc_key.clone(),
            line,
            entity: entity.to_string(),
        }
    }

    fn add_span(&mut self, entity: &str, span: Span) {
        match self.clusters.iter_mut().find(|(e, _)| e == entity) {
            Some((_, spans)) => spans.push(span),
            None => self.clusters.push((entity.to_string(), vec![span])),
        }
    }

    fn token(&mut self, word: &str, speaker: &str, coref: &str, line: usize) -> Result<()> {
        let idx = self.doc.tokens.len();
        self.doc.tokens.push(Token {
            text: word.to_string(),
            sentence: self.sentence,
            speaker: speaker.to_string(),
        });
        self.sentence_has_tokens = true;
        if coref == "-" {
            return Ok(());
        }
        for part in coref.split('|') {
            let opens = part.starts_with('(');
            let closes = part.ends_with(')');
            let id = part.trim_start_matches('(').trim_end_matches(')');
            if id.is_empty() || (!opens && !closes) {
                return Err(Error::Parse {
                    line,
                    msg: format!("bad coreference cell `{coref}`"),
                });
            }
            match (opens, closes) {
                (true, true) => self.add_span(id, Span::new(idx, idx)),
                (true, false) => self.open.entry(id.to_string()).or_default().push(idx),
                (false, true) => {
                    let start = self
                        .open
                        .get_mut(id)
                        .and_then(Vec::pop)
                        .ok_or_else(|| self.unbalanced(line, id))?;
                    self.add_span(id, Span::new(start, idx));
                }
                (false, false) => unreachable!(),
            }
        }
        Ok(())
    }

    fn finish(mut self, line: usize) -> Result<Document> {
        if let Some((id, _)) = self.open.iter().find(|(_, v)| !v.is_empty()) {
            return Err(self.unbalanced(line, id));
        }
        // numeric entity ids keep their numeric order; others follow in order
        // of first completed mention
        self.clusters
            .sort_by_key(|(id, _)| id.parse::<u64>().map_or((1, 0), |n| (0, n)));
        self.doc.gold_clusters = self
            .clusters
            .into_iter()
            .map(|(_, mut spans)| {
                spans.sort();
                spans
            })
            .collect();
        self.doc.validate()?;
        Ok(self.doc)
    }
}

/// Writes documents in CoNLL-2012 columns. Cluster `k` of a document is
/// written as entity id `k`; non-referring markables have no column here.
pub fn write_conll2012(docs: &[Document]) -> String {
    let mut out = String::new();
    for doc in docs {
        let (name, part) = match doc.doc_key.rsplit_once('#') {
            Some((n, p)) => (n, p),
            None => (doc.doc_key.as_str(), "000"),
        };
        let part_num: u32 = part.parse().unwrap_or(0);
        let _ = writeln!(out, "#begin document ({name}); part {part}");
        let cells = coref_cells(doc);
        let sentences = doc.sentences();
        for (k, range) in sentences.iter().enumerate() {
            for (pos, t) in range.clone().enumerate() {
                let tok = &doc.tokens[t];
                let speaker = if tok.speaker.is_empty() { "-" } else { &tok.speaker };
                let _ = writeln!(
                    out,
                    "{name}\t{part_num}\t{pos}\t{}\t-\t-\t-\t-\t-\t{speaker}\t*\t{}",
                    tok.text, cells[t]
                );
            }
            if k + 1 < sentences.len() {
                out.push('\n');
            }
        }
        out.push('\n');
        out.push_str("#end document\n");
    }
    out
}

fn coref_cells(doc: &Document) -> Vec<String> {
    let n = doc.len();
    let mut closes: Vec<Vec<String>> = vec![Vec::new(); n];
    let mut singles: Vec<Vec<String>> = vec![Vec::new(); n];
    let mut opens: Vec<Vec<(usize, String)>> = vec![Vec::new(); n];
    for (k, cluster) in doc.gold_clusters.iter().enumerate() {
        for s in cluster {
            if s.start == s.end {
                singles[s.start].push(format!("({k})"));
            } else {
                opens[s.start].push((s.end, format!("({k}")));
                closes[s.end].push(format!("{k})"));
            }
        }
    }
    (0..n)
        .map(|t| {
            let mut o = std::mem::take(&mut opens[t]);
            o.sort_by_key(|e| std::cmp::Reverse(e.0));
            let parts: Vec<String> = closes[t]
                .drain(..)
                .chain(singles[t].drain(..))
                .chain(o.into_iter().map(|(_, s)| s))
                .collect();
            if parts.is_empty() {
                "-".to_string()
            } else {
                parts.join("|")
            }
        })
        .collect()
}
