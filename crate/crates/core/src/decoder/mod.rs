//! Greedy cluster-ranking resolution over pruned mentions.

mod state;

use serde::{Deserialize, Serialize};

pub use state::{ClusterState, ClusterStore, StateId};

use crate::corpus::{NrType, Span};
use crate::error::{Error, Result};
use crate::numcore::softmax;

/// A non-attachment outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EpsilonClass {
    NonMention,
    NonReferring(NrType),
    DiscourseNew,
}

/// Which ε classes the scorer emits, in score-vector order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EpsilonLayout {
    /// `[NO, NR, DN]`
    #[default]
    Collapsed,
    /// `[NO, Expletive, Predicate, Quantifier, Coordination, Idiom, DN]`
    Fine,
}

impl EpsilonLayout {
    pub fn classes(self) -> Vec<EpsilonClass> {
        let mut out = vec![EpsilonClass::NonMention];
        match self {
            EpsilonLayout::Collapsed => out.push(EpsilonClass::NonReferring(NrType::Nr)),
            EpsilonLayout::Fine => out.extend(NrType::FINE.iter().map(|t| EpsilonClass::NonReferring(*t))),
        }
        out.push(EpsilonClass::DiscourseNew);
        out
    }

    pub fn len(self) -> usize {
        match self {
            EpsilonLayout::Collapsed => 3,
            EpsilonLayout::Fine => 2 + NrType::FINE.len(),
        }
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn index_of(self, class: EpsilonClass) -> Option<usize> {
        self.classes().iter().position(|c| *c == class)
    }

    /// Maps an annotated type onto this layout's NR class.
    pub fn nr_class(self, ty: NrType) -> EpsilonClass {
        match self {
            EpsilonLayout::Collapsed => EpsilonClass::NonReferring(NrType::Nr),
            EpsilonLayout::Fine => EpsilonClass::NonReferring(ty),
        }
    }
}

/// How non-referring decisions are applied during resolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NrMode {
    /// NR decisions remove the span immediately.
    Prefilter,
    /// NR decisions are honored only above confidence `t`; the rest are
    /// clustered and reconsidered after the pass.
    Hybrid(f64),
    /// Hybrid over fine-grained NR types.
    Fine(f64),
}

impl NrMode {
    fn threshold(self) -> Option<f64> {
        match self {
            NrMode::Prefilter => None,
            NrMode::Hybrid(t) | NrMode::Fine(t) => Some(t),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResolveOptions {
    pub mode: NrMode,
    pub history: bool,
    pub max_clusters: usize,
    pub layout: EpsilonLayout,
}

impl Default for ResolveOptions {
    fn default() -> Self {
        ResolveOptions {
            mode: NrMode::Hybrid(0.5),
            history: true,
            max_clusters: 250,
            layout: EpsilonLayout::Collapsed,
        }
    }
}

impl ResolveOptions {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.mode.threshold() {
            if t.is_nan() || t < 0.0 {
                return Err(Error::Config(format!("threshold must be >= 0, got {t}")));
            }
        }
        if matches!(self.mode, NrMode::Fine(_)) && self.layout != EpsilonLayout::Fine {
            return Err(Error::Config("fine mode needs a model trained with fine NR types".into()));
        }
        if self.max_clusters == 0 {
            return Err(Error::Config("max_clusters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Scores consumed by [`resolve`]. Mentions are indexed in text order.
pub trait Scorer {
    fn num_mentions(&self) -> usize;
    /// `s_m(i)`.
    fn mention_score(&self, i: usize) -> f64;
    /// Mention representation aggregated into cluster states.
    fn repr(&self, i: usize) -> &[f64];
    /// One score per class of the layout, `s_m` already folded into NR and DN.
    fn epsilon_scores(&mut self, i: usize) -> Result<Vec<f64>>;
    /// Salience logit of mention `m` at 1-based `position` in its cluster.
    fn salience(&mut self, m: usize, position: usize) -> Result<f64>;
    /// `s_mc(i, j)` for each candidate state.
    fn pair_scores(&mut self, i: usize, states: &[&ClusterState]) -> Result<Vec<f64>>;
}

/// What happened to one mention.
#[derive(Clone, Debug, PartialEq)]
pub enum Choice {
    NonMention,
    /// Honored NR decision; the span left processing.
    NonReferring(NrType),
    NewCluster { created: StateId },
    Attach { chosen: StateId, created: StateId },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub mention: usize,
    /// Candidate states scored for this mention, oldest first.
    pub candidates: Vec<StateId>,
    /// Collapsed ε scores `[NO, NR, DN]` followed by one score per candidate.
    pub scores: Vec<f64>,
    pub choice: Choice,
    /// Score of the applied choice.
    pub score: f64,
    /// Set when an NR argmax fell below the hybrid threshold.
    pub deferred: Option<NrType>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Resolution {
    /// Output partition, singletons included, each cluster in text order.
    pub clusters: Vec<Vec<Span>>,
    pub nonreferring: Vec<(Span, NrType)>,
    pub trace: Vec<Decision>,
}

/// Output of [`resolve`] with the state store kept for training.
#[derive(Clone, Debug, Default)]
pub struct Decoded {
    pub resolution: Resolution,
    pub store: ClusterStore,
}

/// Collapsed `[NO, NR, DN]` view plus the argmax NR type.
pub fn collapse_epsilon(eps: &[f64], layout: EpsilonLayout) -> ([f64; 3], NrType) {
    debug_assert_eq!(eps.len(), layout.len());
    let last = eps.len() - 1;
    let classes = layout.classes();
    let mut best = 1;
    for k in 2..last {
        if eps[k] > eps[best] {
            best = k;
        }
    }
    let ty = match classes[best] {
        EpsilonClass::NonReferring(t) => t,
        _ => unreachable!("middle classes are NR"),
    };
    ([eps[0], eps[best], eps[last]], ty)
}

const NO: usize = 0;
const NR: usize = 1;
const DN: usize = 2;

/// Index into `[NO, NR, DN, candidates..]` of the argmax. Ties prefer DN,
/// then NO, then NR, then the most recent candidate.
fn argmax(scores: &[f64], allow_no_nr: bool) -> usize {
    let mut best = DN;
    let mut order: Vec<usize> = Vec::with_capacity(scores.len());
    if allow_no_nr {
        order.extend([NO, NR]);
    }
    order.extend((3..scores.len()).rev());
    for k in order {
        if scores[k] > scores[best] {
            best = k;
        }
    }
    best
}

/// Runs the greedy left-to-right pass over `spans` (text order, one per
/// scorer mention).
pub fn resolve<S: Scorer + ?Sized>(
    scorer: &mut S,
    spans: &[Span],
    opts: &ResolveOptions,
) -> Result<Decoded> {
    opts.validate()?;
    let n = scorer.num_mentions();
    if spans.len() != n {
        return Err(Error::Config(format!(
            "{} spans for {n} scored mentions",
            spans.len()
        )));
    }
    let label = |ty: NrType| match opts.layout {
        EpsilonLayout::Collapsed => NrType::Nr,
        EpsilonLayout::Fine => ty,
    };
    let mut store = ClusterStore::new();
    let mut trace = Vec::with_capacity(n);
    let mut nonreferring = Vec::new();
    let mut deferred: Vec<(usize, NrType)> = Vec::new();

    for (i, &span) in spans.iter().enumerate() {
        let eps = scorer.epsilon_scores(i)?;
        if eps.len() != opts.layout.len() {
            return Err(Error::Config(format!(
                "scorer emitted {} epsilon scores, layout needs {}",
                eps.len(),
                opts.layout.len()
            )));
        }
        let (collapsed, nr_type) = collapse_epsilon(&eps, opts.layout);
        let candidates = store.candidates(opts.history, opts.max_clusters);
        let states: Vec<&ClusterState> = candidates
            .iter()
            .map(|&id| store.get(id))
            .collect::<Result<_>>()?;
        let pair = scorer.pair_scores(i, &states)?;
        let sm = scorer.mention_score(i);
        let mut scores = collapsed.to_vec();
        scores.extend(states.iter().zip(&pair).map(|(s, p)| sm + s.score + p));

        let mut best = argmax(&scores, true);
        let mut deferred_type = None;
        if best == NR {
            if let Some(t) = opts.mode.threshold() {
                let p = softmax(&scores)?[NR];
                if p <= t {
                    deferred_type = Some(label(nr_type));
                    best = argmax(&scores, false);
                }
            }
        }
        let choice = match best {
            NO => Choice::NonMention,
            NR => {
                nonreferring.push((span, label(nr_type)));
                Choice::NonReferring(label(nr_type))
            }
            DN => {
                let beta = scorer.salience(i, 1)?;
                Choice::NewCluster {
                    created: store.create(i, beta, scorer.repr(i), sm),
                }
            }
            k => {
                let chosen = candidates[k - 3];
                let live = store.latest(chosen)?;
                let position = store.get(live)?.len() + 1;
                let beta = scorer.salience(i, position)?;
                let created = store.extend(
                    live,
                    i,
                    beta,
                    |m| scorer.repr(m),
                    |m| scorer.mention_score(m),
                )?;
                Choice::Attach { chosen, created }
            }
        };
        if let Some(ty) = deferred_type {
            deferred.push((i, ty));
        }
        trace.push(Decision {
            mention: i,
            candidates,
            score: scores[best],
            scores,
            choice,
            deferred: deferred_type,
        });
    }

    // postfilter: deferred spans that ended up alone become NR markables
    let mut dropped = vec![false; store.len()];
    for &(i, ty) in &deferred {
        if let Some(state) = store.live().find(|s| s.members.contains(&i)) {
            if state.len() == 1 {
                dropped[state.id] = true;
                nonreferring.push((spans[i], ty));
            }
        }
    }
    let mut clusters: Vec<Vec<Span>> = store
        .live()
        .filter(|s| !dropped[s.id])
        .map(|s| {
            let mut c: Vec<Span> = s.members.iter().map(|&m| spans[m]).collect();
            c.sort();
            c
        })
        .collect();
    clusters.sort();
    nonreferring.sort();
    Ok(Decoded {
        resolution: Resolution {
            clusters,
            nonreferring,
            trace,
        },
        store,
    })
}
