mod common;

use anaphora_core::corpus::NrType;
use anaphora_core::decoder::{resolve, Choice, EpsilonLayout, NrMode, ResolveOptions};
use common::*;
use proptest::prelude::*;

fn opts(mode: NrMode, history: bool, layout: EpsilonLayout) -> ResolveOptions {
    ResolveOptions {
        mode,
        history,
        max_clusters: 250,
        layout,
    }
}

fn mode_strategy() -> impl Strategy<Value = (NrMode, EpsilonLayout)> {
    (0usize..3, 0.0f64..1.0).prop_map(|(k, t)| match k {
        0 => (NrMode::Prefilter, EpsilonLayout::Collapsed),
        1 => (NrMode::Hybrid(t), EpsilonLayout::Collapsed),
        _ => (NrMode::Fine(t), EpsilonLayout::Fine),
    })
}

proptest! {
    #[test]
    fn matches_interpreter(seed in any::<u64>(), n in 0usize..9, (mode, layout) in mode_strategy(), history in any::<bool>()) {
        let table = RandomTable::new(seed, n, layout);
        let got = resolve(&mut table.clone(), &spans(n), &opts(mode, history, layout)).unwrap().resolution;
        let want = interpret(&table, mode, history);
        prop_assert_eq!(got.clusters, want.clusters);
        prop_assert_eq!(got.nonreferring, want.nonreferring);
    }

    #[test]
    fn zero_threshold_is_prefilter(seed in any::<u64>(), n in 0usize..9, history in any::<bool>()) {
        let table = RandomTable::new(seed, n, EpsilonLayout::Collapsed);
        let a = resolve(&mut table.clone(), &spans(n), &opts(NrMode::Prefilter, history, EpsilonLayout::Collapsed)).unwrap();
        let b = resolve(&mut table.clone(), &spans(n), &opts(NrMode::Hybrid(0.0), history, EpsilonLayout::Collapsed)).unwrap();
        prop_assert_eq!(a.resolution.clusters, b.resolution.clusters);
        prop_assert_eq!(a.resolution.nonreferring, b.resolution.nonreferring);
    }

    #[test]
    fn output_is_a_partition_of_processed_mentions(seed in any::<u64>(), n in 0usize..9, (mode, layout) in mode_strategy(), history in any::<bool>()) {
        let table = RandomTable::new(seed, n, layout);
        let r = resolve(&mut table.clone(), &spans(n), &opts(mode, history, layout)).unwrap().resolution;
        let mut seen = vec![0; n];
        for c in &r.clusters {
            for s in c {
                seen[s.start] += 1;
            }
        }
        for (s, _) in &r.nonreferring {
            seen[s.start] += 1;
        }
        for d in &r.trace {
            let expected = usize::from(!matches!(d.choice, Choice::NonMention));
            prop_assert_eq!(seen[d.mention], expected, "mention {}", d.mention);
        }
        prop_assert_eq!(r.trace.len(), n);
    }

    #[test]
    fn latest_pointers_reach_the_live_superset(seed in any::<u64>(), n in 0usize..9, history in any::<bool>()) {
        let table = RandomTable::new(seed, n, EpsilonLayout::Collapsed);
        let d = resolve(&mut table.clone(), &spans(n), &opts(NrMode::Hybrid(0.5), history, EpsilonLayout::Collapsed)).unwrap();
        for s in d.store.states() {
            let live = d.store.get(d.store.latest(s.id).unwrap()).unwrap();
            prop_assert!(live.is_live());
            prop_assert!(live.members.starts_with(&s.members));
            // one hop is enough: every version points at the newest one
            prop_assert!(d.store.get(s.latest).unwrap().is_live());
        }
    }

    #[test]
    fn candidate_windows(seed in any::<u64>(), n in 1usize..10, cap in 1usize..4, history in any::<bool>()) {
        let table = RandomTable::new(seed, n, EpsilonLayout::Collapsed);
        let o = ResolveOptions { max_clusters: cap, ..opts(NrMode::Prefilter, history, EpsilonLayout::Collapsed) };
        let d = resolve(&mut table.clone(), &spans(n), &o).unwrap();
        let mut created = 0usize;
        for dec in &d.resolution.trace {
            prop_assert!(dec.candidates.len() <= cap);
            prop_assert!(dec.candidates.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(dec.candidates.iter().all(|&id| id < created));
            if history {
                // the window is the most recent states
                let expect: Vec<usize> = (created.saturating_sub(cap)..created).collect();
                prop_assert_eq!(&dec.candidates, &expect);
            }
            if let Choice::NewCluster { created: c } | Choice::Attach { created: c, .. } = dec.choice {
                prop_assert_eq!(c, created);
                created += 1;
            }
        }
    }

    #[test]
    fn fine_mode_labels_are_fine_types(seed in any::<u64>(), n in 1usize..9) {
        let table = RandomTable::new(seed, n, EpsilonLayout::Fine);
        let r = resolve(&mut table.clone(), &spans(n), &opts(NrMode::Fine(0.3), true, EpsilonLayout::Fine)).unwrap().resolution;
        prop_assert!(r.nonreferring.iter().all(|(_, t)| *t != NrType::Nr));
    }
}

#[test]
fn history_with_three_mentions_by_hand() {
    // mention 0 starts a cluster, 1 joins it, 2 prefers the history version
    // {0} and is attached to the live cluster {0, 1}
    let mut t = RandomTable::new(0, 3, EpsilonLayout::Collapsed);
    t.sm = vec![0.0; 3];
    t.beta = vec![vec![0.0; 8]; 3];
    t.eps_raw = vec![vec![-9.0, -9.0, 1.0], vec![-9.0, -9.0, -9.0], vec![-9.0, -9.0, -9.0]];
    struct Hand(RandomTable);
    impl anaphora_core::decoder::Scorer for Hand {
        fn num_mentions(&self) -> usize {
            3
        }
        fn mention_score(&self, _: usize) -> f64 {
            0.0
        }
        fn repr(&self, i: usize) -> &[f64] {
            &self.0.reprs[i]
        }
        fn epsilon_scores(&mut self, i: usize) -> anaphora_core::Result<Vec<f64>> {
            Ok(self.0.eps(i))
        }
        fn salience(&mut self, _: usize, _: usize) -> anaphora_core::Result<f64> {
            Ok(0.0)
        }
        fn pair_scores(&mut self, _: usize, states: &[&anaphora_core::decoder::ClusterState]) -> anaphora_core::Result<Vec<f64>> {
            Ok(states.iter().map(|s| if s.members == [0] { 5.0 } else { 1.0 }).collect())
        }
    }
    for history in [true, false] {
        let d = resolve(&mut Hand(t.clone()), &spans(3), &opts(NrMode::Prefilter, history, EpsilonLayout::Collapsed)).unwrap();
        assert_eq!(d.resolution.clusters, vec![spans(3)], "history={history}");
        let last = &d.resolution.trace[2];
        let expected_candidates = if history { vec![0, 1] } else { vec![1] };
        assert_eq!(last.candidates, expected_candidates);
        match last.choice {
            Choice::Attach { chosen, created } => {
                assert_eq!(chosen, if history { 0 } else { 1 });
                assert_eq!(created, 2);
            }
            ref c => panic!("unexpected {c:?}"),
        }
    }
}
