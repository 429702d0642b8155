//! Acceptance checks. Each test prints one `[PASS]` or `[FAIL]` line with the
//! measured quantity and its bound; run with `--nocapture` to see them.

mod common;

use std::time::Instant;

use anaphora_core::config::TrainConfig;
use anaphora_core::corpus::{Document, Span};
use anaphora_core::decoder::{resolve, Choice, EpsilonLayout, NrMode, ResolveOptions};
use anaphora_core::encoder::{enumerate_spans, prune_spans};
use anaphora_core::metrics::{b_cubed, ceaf_phi4, muc, report, Singletons};
use anaphora_core::model::{Embeddings, Model};
use anaphora_core::par::Execution;
use anaphora_core::predict::predict_corpus;
use anaphora_core::synthetic::synthetic_corpus;
use anaphora_core::trainer::Trainer;
use common::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(criterion: u32, ok: bool, detail: &str) {
    println!("[{}] criterion {criterion}: {detail}", if ok { "PASS" } else { "FAIL" });
}

// ---------------------------------------------------------------------------

const METRIC_TOL: f64 = 1e-9;

#[test]
fn criterion_1_scorer_fixtures() {
    let t0 = Instant::now();
    let (a, b, c) = (span(0), span(1), span(2));
    let key = vec![vec![a, b, c]];
    let response = vec![vec![a, b], vec![c]];
    let m = muc(&key, &response).unwrap().f1;
    let b3 = b_cubed(&key, &response).unwrap().f1;
    let ce = ceaf_phi4(&key, &response).unwrap().f1;
    let mut ok = (m - 2.0 / 3.0).abs() < 1e-12 && (b3 - 5.0 / 7.0).abs() < 1e-12 && (ce - 0.533_333_3).abs() < 1e-6;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (key, response) = random_partitions(&mut rng, 8);
        let pairs = [
            (muc(&key, &response).unwrap(), muc_oracle(&key, &response)),
            (b_cubed(&key, &response).unwrap(), b_cubed_oracle(&key, &response)),
            (ceaf_phi4(&key, &response).unwrap(), ceaf_oracle(&key, &response)),
        ];
        for (got, (p, r, f)) in pairs {
            worst = worst
                .max((got.precision - p).abs())
                .max((got.recall - r).abs())
                .max((got.f1 - f).abs());
        }
    }
    ok &= worst < METRIC_TOL;
    let secs = t0.elapsed().as_secs_f64();
    ok &= secs < 10.0;
    verdict(
        1,
        ok,
        &format!(
            "fixture MUC {m:.6} B3 {b3:.6} CEAF {ce:.6}; 50 random partitions max dev {worst:.1e} (tol {METRIC_TOL:.0e}); {secs:.2}s (< 10s)"
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------

const GRAD_TOL: f64 = 1e-4;

#[test]
fn criterion_2_gradient_suite() {
    let t0 = Instant::now();
    let mut worst: Vec<(&'static str, f64, String)> = Vec::new();
    let (mut checked, mut skipped) = (0, 0);
    for seed in 0..20 {
        for mut case in gradient_cases(seed) {
            let per_param = if case.name == "document_loss" { 3 } else { 12 };
            let r = check_case(&mut case, per_param, seed);
            checked += r.checked;
            skipped += r.skipped;
            match worst.iter_mut().find(|w| w.0 == case.name) {
                Some(w) if r.max_rel > w.1 => *w = (case.name, r.max_rel, format!("seed {seed}: {}", r.worst)),
                Some(_) => {}
                None => worst.push((case.name, r.max_rel, format!("seed {seed}: {}", r.worst))),
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    for (name, rel, at) in &worst {
        println!("    {name:<18} max rel err {rel:.2e}  ({at})");
    }
    let skip_frac = skipped as f64 / (checked + skipped) as f64;
    let ok = max < GRAD_TOL && skip_frac < 0.05 && secs < 60.0;
    verdict(
        2,
        ok,
        &format!(
            "{} cases x 20 seeds, {checked} entries (+{skipped} skipped at kinks), max rel err {max:.2e} (< {GRAD_TOL:.0e}); {secs:.1}s (< 60s)",
            worst.len()
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_3_decoder_conformance() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut runs = 0;
    let mut mismatches = Vec::new();
    for table_seed in 0..100u64 {
        let n = rng.random_range(1..=6);
        let t = rng.random_range(0.0..1.0);
        for (mode, layout) in [
            (NrMode::Prefilter, EpsilonLayout::Collapsed),
            (NrMode::Hybrid(t), EpsilonLayout::Collapsed),
            (NrMode::Fine(t), EpsilonLayout::Fine),
        ] {
            let table = RandomTable::new(table_seed, n, layout);
            for history in [true, false] {
                let opts = ResolveOptions {
                    mode,
                    history,
                    max_clusters: 250,
                    layout,
                };
                let got = resolve(&mut table.clone(), &spans(n), &opts).unwrap().resolution;
                let want = interpret(&table, mode, history);
                runs += 1;
                if got.clusters != want.clusters || got.nonreferring != want.nonreferring {
                    mismatches.push(format!("table {table_seed} {mode:?} history={history}"));
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = mismatches.is_empty() && secs < 30.0;
    verdict(
        3,
        ok,
        &format!("{runs} runs over 100 tables, {} mismatches; {secs:.2}s (< 30s)", mismatches.len()),
    );
    assert!(ok, "{mismatches:?}");
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_4_mode_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut zero_ok, mut two_ok, mut deferred_total) = (0, 0, 0);
    for seed in 0..100u64 {
        let n = rng.random_range(1..=8);
        let history = rng.random_bool(0.5);
        let table = RandomTable::new(1000 + seed, n, EpsilonLayout::Collapsed);
        let opts = |mode| ResolveOptions {
            mode,
            history,
            max_clusters: 250,
            layout: EpsilonLayout::Collapsed,
        };
        let pre = resolve(&mut table.clone(), &spans(n), &opts(NrMode::Prefilter)).unwrap();
        let h0 = resolve(&mut table.clone(), &spans(n), &opts(NrMode::Hybrid(0.0))).unwrap();
        if pre.resolution.clusters == h0.resolution.clusters && pre.resolution.nonreferring == h0.resolution.nonreferring {
            zero_ok += 1;
        }

        // t = 2: nothing is removed during the pass; afterwards exactly the
        // NR-argmax spans that ended up alone become NR markables
        let h2 = resolve(&mut table.clone(), &spans(n), &opts(NrMode::Hybrid(2.0))).unwrap();
        let r = &h2.resolution;
        let mut nr_argmax = Vec::new();
        let mut removed_in_pass = false;
        for d in &r.trace {
            let top = d.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let is_nr = d.scores[1] == top && d.scores.iter().filter(|&&s| s == top).count() == 1;
            if is_nr {
                nr_argmax.push(d.mention);
                removed_in_pass |= matches!(d.choice, Choice::NonMention | Choice::NonReferring(_));
            }
            removed_in_pass |= matches!(d.choice, Choice::NonReferring(_));
        }
        deferred_total += nr_argmax.len();
        // partition of the pass before postfiltering
        let mut pass: Vec<Vec<usize>> = h2.decoded_partition();
        let alone: Vec<Span> = nr_argmax
            .iter()
            .filter(|&&i| pass.iter().any(|c| c == &vec![i]))
            .map(|&i| span(i))
            .collect();
        pass.retain(|c| !(c.len() == 1 && nr_argmax.contains(&c[0])));
        let mut expect_clusters: Vec<Vec<Span>> = pass.into_iter().map(|c| c.into_iter().map(span).collect()).collect();
        expect_clusters.iter_mut().for_each(|c| c.sort());
        expect_clusters.sort();
        let got_nr: Vec<Span> = r.nonreferring.iter().map(|(s, _)| *s).collect();
        if !removed_in_pass && got_nr == alone && r.clusters == expect_clusters {
            two_ok += 1;
        }
    }
    let ok = zero_ok == 100 && two_ok == 100;
    verdict(
        4,
        ok,
        &format!(
            "hybrid(0) == prefilter on {zero_ok}/100; hybrid(2) pure postfilter on {two_ok}/100 ({deferred_total} NR-argmax decisions deferred)"
        ),
    );
    assert!(ok);
}

/// Live clusters of a decoding pass as member lists, singletons included.
trait PassPartition {
    fn decoded_partition(&self) -> Vec<Vec<usize>>;
}

impl PassPartition for anaphora_core::decoder::Decoded {
    fn decoded_partition(&self) -> Vec<Vec<usize>> {
        self.store.live().map(|s| s.members.clone()).collect()
    }
}

// ---------------------------------------------------------------------------

fn train_until(
    docs: &[Document],
    config: TrainConfig,
    emb: &Embeddings,
    seed: u64,
    max_steps: u64,
    every: u64,
    target: Option<(f64, f64)>,
) -> (Trainer, u64, f64, f64) {
    let model = Model::new(config, HASHED_DIM, seed).unwrap();
    let mut trainer = Trainer::new(model, seed);
    let opts = ResolveOptions {
        layout: trainer.model.config.layout(),
        ..ResolveOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = Vec::new();
    let (mut conll, mut nr) = (0.0, 0.0);
    for step in 1..=max_steps {
        if order.is_empty() {
            order = (0..docs.len()).collect();
            order.shuffle(&mut rng);
        }
        let d = order.pop().unwrap();
        trainer.step(&docs[d], emb).unwrap();
        if let Some((want_conll, want_nr)) = target {
            if step % every == 0 || step == max_steps {
                let pred = predict_corpus(&trainer.model, emb, docs, &opts, Execution::Parallel).unwrap();
                let rep = report(docs, &pred, Singletons::Included, false).unwrap();
                conll = rep.conll_f1;
                nr = rep.nr.map_or(0.0, |n| n.overall.f1);
                if conll >= want_conll && nr >= want_nr {
                    return (trainer, step, conll, nr);
                }
            }
        }
    }
    (trainer, max_steps, conll, nr)
}

const OVERFIT_CONLL: f64 = 0.95;
const OVERFIT_NR: f64 = 0.90;

#[test]
fn criterion_5_overfit() {
    let t0 = Instant::now();
    let docs = synthetic_corpus(10, 5, 0);
    let emb = hashed_embeddings();
    let mut ok = true;
    for seed in 0..3 {
        let (_, step, conll, nr) = train_until(&docs, tiny_config(), &emb, seed, 2000, 100, Some((OVERFIT_CONLL, OVERFIT_NR)));
        let hit = conll >= OVERFIT_CONLL && nr >= OVERFIT_NR;
        println!("    seed {seed}: step {step} CoNLL {conll:.3} NR F1 {nr:.3} {}", if hit { "reached" } else { "not reached" });
        ok &= hit;
    }
    let secs = t0.elapsed().as_secs_f64();
    ok &= secs < 1200.0;
    verdict(
        5,
        ok,
        &format!("training-set CoNLL >= {OVERFIT_CONLL} and NR F1 >= {OVERFIT_NR} within 2000 steps, seeds 0-2; {secs:.0}s (< 1200s)"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_6_singleton_and_nr_training_aid() {
    let train_docs = synthetic_corpus(20, 5, 60);
    let held_out = synthetic_corpus(10, 5, 61);
    let emb = hashed_embeddings();
    let opts = ResolveOptions::default();
    let mut wins = 0;
    let mut deltas = Vec::new();
    for seed in 0..3 {
        let score = |with: bool| {
            let config = TrainConfig {
                train_singletons_and_nr: with,
                ..tiny_config()
            };
            let docs: Vec<Document> = if with {
                train_docs.clone()
            } else {
                train_docs.iter().map(Document::without_singletons_and_nonreferring).collect()
            };
            let (trainer, ..) = train_until(&docs, config, &emb, seed, 1500, 0, None);
            let pred = predict_corpus(&trainer.model, &emb, &held_out, &opts, Execution::Parallel).unwrap();
            report(&held_out, &pred, Singletons::Excluded, false).unwrap().conll_f1
        };
        let (with, without) = (score(true), score(false));
        println!("    seed {seed}: with {with:.4} without {without:.4} delta {:+.4}", with - without);
        deltas.push(with - without);
        if with >= without {
            wins += 1;
        }
    }
    let ok = wins >= 2;
    verdict(
        6,
        ok,
        &format!(
            "held-out singleton-excluded CoNLL, with >= without in {wins}/3 seeds (need 2); deltas {}",
            deltas.iter().map(|d| format!("{d:+.4}")).collect::<Vec<_>>().join(" ")
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_7_pruning_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut runs = 0;
    let mut violations = Vec::new();
    for t in 1..=50usize {
        for max_width in [1, 3, 10, 30, t] {
            let spans = enumerate_spans(t, max_width);
            for trial in 0..20 {
                // integer scores in a narrow range force many ties
                let scores: Vec<f64> = if trial % 2 == 0 {
                    spans.iter().map(|_| rng.random_range(-1.0..1.0)).collect()
                } else {
                    spans.iter().map(|_| rng.random_range(0..3) as f64).collect()
                };
                let kept = prune_spans(&spans, &scores, 0.4, t);
                runs += 1;
                let budget = (0.4 * t as f64 + 1e-9).floor() as usize;
                let chosen: Vec<Span> = kept.iter().map(|&k| spans[k]).collect();
                let overlap = chosen
                    .iter()
                    .enumerate()
                    .any(|(a, x)| chosen[a + 1..].iter().any(|y| x.partially_overlaps(y)));
                if kept.len() > budget || overlap {
                    violations.push((t, max_width, trial));
                }
            }
        }
    }
    let ok = violations.is_empty();
    verdict(
        7,
        ok,
        &format!("T = 1..50, {runs} score draws: count <= floor(0.4T) and no partial overlap; {} violations", violations.len()),
    );
    assert!(ok, "{violations:?}");
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_8_oracle_vs_system_step_time() {
    let docs = synthetic_corpus(10, 5, 0);
    let emb = hashed_embeddings();
    let mut times = Vec::new();
    for oracle in [true, false] {
        let config = TrainConfig {
            oracle_clusters: oracle,
            ..tiny_config()
        };
        let t0 = Instant::now();
        let steps = 200;
        train_until(&docs, config, &emb, 0, steps, 0, None);
        times.push(t0.elapsed().as_secs_f64() / steps as f64);
    }
    let ratio = times[1] / times[0];
    verdict(
        8,
        true,
        &format!(
            "step time oracle {:.2} ms, system {:.2} ms, system/oracle ratio {ratio:.2} (informational)",
            times[0] * 1e3,
            times[1] * 1e3
        ),
    );
}
