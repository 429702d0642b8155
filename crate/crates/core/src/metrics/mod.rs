//! Coreference and non-referring evaluation.

mod assignment;
mod coref;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::ops::AddAssign;

use serde::Serialize;

pub use assignment::max_weight_assignment;
pub use coref::{
    b_cubed, b_cubed_counts, ceaf_phi4, ceaf_phi4_counts, drop_singletons, muc, muc_counts, phi4,
};

use crate::corpus::{Document, NrType, Span};
use crate::error::{Error, Result};
use crate::par::{par_map, Execution};

/// Weight of the coreference average in the weighted score; the rest goes
/// to non-referring F1.
pub const COREF_WEIGHT: f64 = 0.85;

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        Prf {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

/// Precision and recall as numerator/denominator pairs so that documents
/// can be pooled before dividing.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Counts {
    pub p_num: f64,
    pub p_den: f64,
    pub r_num: f64,
    pub r_den: f64,
}

impl Counts {
    pub fn prf(&self) -> Prf {
        Prf::new(ratio(self.p_num, self.p_den), ratio(self.r_num, self.r_den))
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.p_num += o.p_num;
        self.p_den += o.p_den;
        self.r_num += o.r_num;
        self.r_den += o.r_den;
    }
}

/// Non-referring counts. With `fine`, a true positive needs the type to
/// match too, and per-type rows restrict both sides to one type.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NrCounts {
    pub overall: Counts,
    pub per_type: BTreeMap<NrType, Counts>,
}

impl AddAssign for NrCounts {
    fn add_assign(&mut self, o: NrCounts) {
        self.overall += o.overall;
        for (t, c) in o.per_type {
            *self.per_type.entry(t).or_default() += c;
        }
    }
}

fn set_counts(gold: &HashSet<(Span, NrType)>, pred: &HashSet<(Span, NrType)>) -> Counts {
    let tp = gold.intersection(pred).count() as f64;
    Counts {
        p_num: tp,
        p_den: pred.len() as f64,
        r_num: tp,
        r_den: gold.len() as f64,
    }
}

pub fn nr_counts(gold: &[(Span, NrType)], pred: &[(Span, NrType)], fine: bool) -> NrCounts {
    let norm = |xs: &[(Span, NrType)]| -> HashSet<(Span, NrType)> {
        xs.iter()
            .map(|&(s, t)| (s, if fine { t } else { NrType::Nr }))
            .collect()
    };
    let g = norm(gold);
    let p = norm(pred);
    let mut per_type = BTreeMap::new();
    if fine {
        for t in NrType::FINE {
            let only = |xs: &HashSet<(Span, NrType)>| -> HashSet<(Span, NrType)> {
                xs.iter().filter(|(_, u)| *u == t).copied().collect()
            };
            per_type.insert(t, set_counts(&only(&g), &only(&p)));
        }
    }
    NrCounts {
        overall: set_counts(&g, &p),
        per_type,
    }
}

pub fn nr_score(gold: &[(Span, NrType)], pred: &[(Span, NrType)], fine: bool) -> Prf {
    nr_counts(gold, pred, fine).overall.prf()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Singletons {
    Included,
    Excluded,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NrReport {
    pub fine: bool,
    pub overall: Prf,
    pub per_type: Vec<(NrType, Prf)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub singletons: Singletons,
    pub documents: usize,
    pub muc: Prf,
    pub b_cubed: Prf,
    pub ceaf_phi4: Prf,
    /// Mean of the three coreference F1 scores.
    pub conll_f1: f64,
    /// Scored only with singletons included.
    pub nr: Option<NrReport>,
    pub weighted_f1: f64,
}

/// Pooled counts for any number of documents.
#[derive(Clone, Debug, Default)]
pub struct Accumulator {
    documents: usize,
    muc: Counts,
    b_cubed: Counts,
    ceaf: Counts,
    nr: NrCounts,
}

impl Accumulator {
    pub fn add(&mut self, key: &Document, response: &Document, singletons: Singletons, fine: bool) -> Result<()> {
        if key.doc_key != response.doc_key {
            return Err(Error::DocKeyMismatch {
                key: key.doc_key.clone(),
                response: response.doc_key.clone(),
            });
        }
        let (k, r) = match singletons {
            Singletons::Included => (key.gold_clusters.clone(), response.gold_clusters.clone()),
            Singletons::Excluded => (
                drop_singletons(&key.gold_clusters),
                drop_singletons(&response.gold_clusters),
            ),
        };
        self.documents += 1;
        self.muc += muc_counts(&k, &r)?;
        self.b_cubed += b_cubed_counts(&k, &r)?;
        self.ceaf += ceaf_phi4_counts(&k, &r)?;
        self.nr += nr_counts(&key.gold_nonreferring, &response.gold_nonreferring, fine);
        Ok(())
    }

    pub fn report(&self, singletons: Singletons, fine: bool) -> EvalReport {
        let muc = self.muc.prf();
        let b_cubed = self.b_cubed.prf();
        let ceaf_phi4 = self.ceaf.prf();
        let conll_f1 = (muc.f1 + b_cubed.f1 + ceaf_phi4.f1) / 3.0;
        let nr = (singletons == Singletons::Included).then(|| NrReport {
            fine,
            overall: self.nr.overall.prf(),
            per_type: self.nr.per_type.iter().map(|(t, c)| (*t, c.prf())).collect(),
        });
        let nr_present = self.nr.overall.p_den + self.nr.overall.r_den > 0.0;
        let weighted_f1 = match &nr {
            Some(n) if nr_present => weighted(conll_f1, n.overall.f1),
            _ => conll_f1,
        };
        EvalReport {
            singletons,
            documents: self.documents,
            muc,
            b_cubed,
            ceaf_phi4,
            conll_f1,
            nr,
            weighted_f1,
        }
    }
}

impl AddAssign for Accumulator {
    fn add_assign(&mut self, o: Accumulator) {
        self.documents += o.documents;
        self.muc += o.muc;
        self.b_cubed += o.b_cubed;
        self.ceaf += o.ceaf;
        self.nr += o.nr;
    }
}

pub fn weighted(conll_f1: f64, nr_f1: f64) -> f64 {
    COREF_WEIGHT * conll_f1 + (1.0 - COREF_WEIGHT) * nr_f1
}

/// Scores `response` against `key`, pairing documents by key. Both sides
/// must hold the same set of documents.
pub fn report(
    key: &[Document],
    response: &[Document],
    singletons: Singletons,
    fine: bool,
) -> Result<EvalReport> {
    report_with(key, response, singletons, fine, Execution::Parallel)
}

/// [`report`] with an explicit schedule. Per-document counts are pooled in
/// key order, so both schedules give bit-identical reports.
pub fn report_with(
    key: &[Document],
    response: &[Document],
    singletons: Singletons,
    fine: bool,
    exec: Execution,
) -> Result<EvalReport> {
    let by_key: HashMap<&str, &Document> =
        response.iter().map(|d| (d.doc_key.as_str(), d)).collect();
    let key_set: HashSet<&str> = key.iter().map(|d| d.doc_key.as_str()).collect();
    let mut missing_in_response: Vec<String> = key_set
        .iter()
        .filter(|k| !by_key.contains_key(*k))
        .map(|k| k.to_string())
        .collect();
    let mut missing_in_key: Vec<String> = by_key
        .keys()
        .filter(|k| !key_set.contains(*k))
        .map(|k| k.to_string())
        .collect();
    if !missing_in_response.is_empty() || !missing_in_key.is_empty() {
        missing_in_response.sort();
        missing_in_key.sort();
        return Err(Error::DocKeySets {
            missing_in_response,
            missing_in_key,
        });
    }
    let parts = par_map(key, exec, |k| {
        let mut acc = Accumulator::default();
        acc.add(k, by_key[k.doc_key.as_str()], singletons, fine).map(|()| acc)
    });
    let mut acc = Accumulator::default();
    for part in parts {
        acc += part?;
    }
    Ok(acc.report(singletons, fine))
}

fn pct(x: f64) -> String {
    format!("{:6.2}", 100.0 * x)
}

/// Aligned plain-text rendering, values as percentages.
pub fn render_text(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let label = match r.singletons {
            Singletons::Included => "singletons included",
            Singletons::Excluded => "singletons excluded",
        };
        let _ = writeln!(out, "== {label} ({} documents) ==", r.documents);
        let _ = writeln!(out, "{:<14} {:>6} {:>6} {:>6}", "metric", "P", "R", "F1");
        let mut row = |name: &str, p: &Prf| {
            let _ = writeln!(out, "{name:<14} {} {} {}", pct(p.precision), pct(p.recall), pct(p.f1));
        };
        row("MUC", &r.muc);
        row("B3", &r.b_cubed);
        row("CEAF_phi4", &r.ceaf_phi4);
        if let Some(nr) = &r.nr {
            row("NR", &nr.overall);
            for (t, p) in &nr.per_type {
                row(&format!("  {}", t.as_str()), p);
            }
        }
        let _ = writeln!(out, "{:<14} {}", "CoNLL avg F1", pct(r.conll_f1));
        let _ = writeln!(out, "{:<14} {}", "weighted F1", pct(r.weighted_f1));
    }
    out
}

pub fn render_json(reports: &[EvalReport]) -> String {
    serde_json::to_string_pretty(reports).expect("report serializes")
}
