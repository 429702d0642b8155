//! Oracle clusters: partial entities built from gold cluster ids over the
//! mentions that survived pruning.

use std::collections::HashMap;

use crate::corpus::{NrType, Span};
use crate::decoder::{EpsilonClass, EpsilonLayout};
use crate::error::{Error, Result};

/// Candidates and gold targets for one mention.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleStep {
    pub mention: usize,
    /// Candidate states as member lists, oldest first.
    pub candidates: Vec<Vec<usize>>,
    /// Indices into `candidates` holding mentions of this mention's entity.
    pub gold_states: Vec<usize>,
    /// The gold ε class when no candidate is gold.
    pub gold_epsilon: Option<EpsilonClass>,
}

impl OracleStep {
    /// Gold positions in the score vector `[ε classes.., candidates..]`.
    pub fn gold_indices(&self, layout: EpsilonLayout) -> Result<Vec<usize>> {
        let n_eps = layout.len();
        let out: Vec<usize> = match self.gold_epsilon {
            Some(class) => layout.index_of(class).into_iter().collect(),
            None => self.gold_states.iter().map(|k| n_eps + k).collect(),
        };
        if out.is_empty() {
            return Err(Error::EmptyGold);
        }
        Ok(out)
    }
}

/// Gold entity id and non-referring type of each kept mention, matched on
/// exact span equality.
pub fn gold_labels(
    kept: &[Span],
    gold_clusters: &[Vec<Span>],
    gold_nr: &[(Span, NrType)],
) -> (Vec<Option<usize>>, Vec<Option<NrType>>) {
    let cluster_of: HashMap<Span, usize> = gold_clusters
        .iter()
        .enumerate()
        .flat_map(|(c, spans)| spans.iter().map(move |s| (*s, c)))
        .collect();
    let nr_of: HashMap<Span, NrType> = gold_nr.iter().copied().collect();
    (
        kept.iter().map(|s| cluster_of.get(s).copied()).collect(),
        kept.iter().map(|s| nr_of.get(s).copied()).collect(),
    )
}

/// ε target for a mention with no gold candidate.
pub fn epsilon_target(entity: Option<usize>, nr: Option<NrType>, layout: EpsilonLayout) -> EpsilonClass {
    match (entity, nr) {
        (Some(_), _) => EpsilonClass::DiscourseNew,
        (None, Some(t)) => layout.nr_class(t),
        (None, None) => EpsilonClass::NonMention,
    }
}

/// Builds one step per kept mention. States are created in mention order
/// exactly as the decoder would create them if it always chose gold; with
/// `history` every pre-attachment version stays a candidate. The window
/// keeps the `max_clusters` most recent states, so an entity whose states
/// all left the window restarts as a new fragment, and an attachment
/// extends the fragment of the most recent gold candidate.
pub fn build_oracle_states(
    kept: &[Span],
    gold_clusters: &[Vec<Span>],
    gold_nr: &[(Span, NrType)],
    history: bool,
    max_clusters: usize,
    layout: EpsilonLayout,
) -> Vec<OracleStep> {
    let (entity, nr) = gold_labels(kept, gold_clusters, gold_nr);
    struct State {
        members: Vec<usize>,
        entity: usize,
        fragment: usize,
        live: bool,
    }
    let mut states: Vec<State> = Vec::new();
    let mut fragments = 0;
    let mut steps = Vec::with_capacity(kept.len());
    for i in 0..kept.len() {
        let mut window: Vec<usize> = (0..states.len())
            .filter(|&k| history || states[k].live)
            .collect();
        if window.len() > max_clusters {
            window.drain(..window.len() - max_clusters);
        }
        let gold_states: Vec<usize> = match entity[i] {
            Some(e) => window
                .iter()
                .enumerate()
                .filter(|(_, &k)| states[k].entity == e)
                .map(|(pos, _)| pos)
                .collect(),
            None => Vec::new(),
        };
        let gold_epsilon = gold_states
            .is_empty()
            .then(|| epsilon_target(entity[i], nr[i], layout));
        if let Some(e) = entity[i] {
            let (members, fragment) = match gold_states.last() {
                Some(&pos) => {
                    let f = states[window[pos]].fragment;
                    let live = states
                        .iter()
                        .position(|s| s.live && s.fragment == f)
                        .expect("every fragment has a live state");
                    states[live].live = false;
                    let mut m = states[live].members.clone();
                    m.push(i);
                    (m, f)
                }
                None => {
                    fragments += 1;
                    (vec![i], fragments - 1)
                }
            };
            steps.push(OracleStep {
                mention: i,
                candidates: window.iter().map(|&k| states[k].members.clone()).collect(),
                gold_states,
                gold_epsilon,
            });
            states.push(State {
                members,
                entity: e,
                fragment,
                live: true,
            });
        } else {
            steps.push(OracleStep {
                mention: i,
                candidates: window.iter().map(|&k| states[k].members.clone()).collect(),
                gold_states,
                gold_epsilon,
            });
        }
    }
    steps
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(k: usize) -> Span {
        Span::new(k, k)
    }

    #[test]
    fn three_mention_document_by_hand() {
        // mentions 0 and 2 corefer, 1 is not annotated
        let kept = [s(0), s(1), s(2), s(3)];
        let gold = vec![vec![s(0), s(2), s(3)]];
        let steps = build_oracle_states(&kept, &gold, &[], true, 250, EpsilonLayout::Collapsed);
        assert_eq!(steps[0].gold_epsilon, Some(EpsilonClass::DiscourseNew));
        assert_eq!(steps[1].gold_epsilon, Some(EpsilonClass::NonMention));
        assert_eq!(steps[2].candidates, vec![vec![0]]);
        assert_eq!(steps[2].gold_states, vec![0]);
        // two prior mentions with history: both versions are gold
        assert_eq!(steps[3].candidates, vec![vec![0], vec![0, 2]]);
        assert_eq!(steps[3].gold_states, vec![0, 1]);
        let no_hist = build_oracle_states(&kept, &gold, &[], false, 250, EpsilonLayout::Collapsed);
        assert_eq!(no_hist[3].candidates, vec![vec![0, 2]]);
        assert_eq!(no_hist[3].gold_states, vec![0]);
    }

    #[test]
    fn nonreferring_target_uses_layout() {
        let kept = [s(0)];
        let nr = [(s(0), NrType::Expletive)];
        let c = build_oracle_states(&kept, &[], &nr, true, 250, EpsilonLayout::Collapsed);
        assert_eq!(c[0].gold_epsilon, Some(EpsilonClass::NonReferring(NrType::Nr)));
        assert_eq!(c[0].gold_indices(EpsilonLayout::Collapsed).unwrap(), vec![1]);
        let f = build_oracle_states(&kept, &[], &nr, true, 250, EpsilonLayout::Fine);
        assert_eq!(f[0].gold_epsilon, Some(EpsilonClass::NonReferring(NrType::Expletive)));
        assert_eq!(f[0].gold_indices(EpsilonLayout::Fine).unwrap(), vec![1]);
    }

    #[test]
    fn gold_indices_offset_past_epsilon() {
        let kept = [s(0), s(1)];
        let gold = vec![vec![s(0), s(1)]];
        let st = build_oracle_states(&kept, &gold, &[], true, 250, EpsilonLayout::Collapsed);
        assert_eq!(st[1].gold_indices(EpsilonLayout::Collapsed).unwrap(), vec![3]);
    }
}
