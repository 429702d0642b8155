//! Shared test support: random score tables, an independent interpreter of
//! the cluster-ranking pseudo-code, brute-force metric oracles, and a
//! finite-difference gradient checker.
#![allow(dead_code)]

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use anaphora_core::config::TrainConfig;
use anaphora_core::corpus::{EmbeddingTable, NrType, Span};
use anaphora_core::decoder::{ClusterState, EpsilonLayout, NrMode, Scorer};
use anaphora_core::model::Embeddings;
use anaphora_core::numcore::{Graph, Mode, ParamStore, Tensor, Var};
use anaphora_core::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn span(k: usize) -> Span {
    Span::new(k, k)
}

pub fn spans(n: usize) -> Vec<Span> {
    (0..n).map(span).collect()
}

/// A small network configuration that trains in seconds.
pub fn tiny_config() -> TrainConfig {
    TrainConfig {
        lstm_layers: 1,
        lstm_size: 32,
        ffnn_layers: 1,
        ffnn_size: 64,
        cnn_filter_widths: vec![2, 3],
        cnn_filter_size: 8,
        feature_embedding_size: 8,
        max_span_width: 4,
        ..TrainConfig::default()
    }
}

pub const HASHED_DIM: usize = 16;

pub fn hashed_embeddings() -> Embeddings {
    Embeddings::new(EmbeddingTable::Hashed { dim: HASHED_DIM, seed: 0 }, None)
}

// ---------------------------------------------------------------------------
// random score tables

/// Uniform scores for up to a handful of mentions. Pair scores are a hash of
/// the mention and the candidate's member list, so every cluster version has
/// its own value without a precomputed table.
#[derive(Clone, Debug)]
pub struct RandomTable {
    pub seed: u64,
    pub layout: EpsilonLayout,
    pub sm: Vec<f64>,
    /// Raw ε scores per layout class; `s_m` is folded in by the scorer.
    pub eps_raw: Vec<Vec<f64>>,
    /// Salience logit of mention `m` at positions 1..=8.
    pub beta: Vec<Vec<f64>>,
    pub reprs: Vec<Vec<f64>>,
}

impl RandomTable {
    pub fn new(seed: u64, n: usize, layout: EpsilonLayout) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uni = |k: usize, lo: f64, hi: f64| -> Vec<f64> { (0..k).map(|_| rng.random_range(lo..hi)).collect() };
        let sm = uni(n, -1.0, 1.0);
        let eps_raw = (0..n).map(|_| uni(layout.len(), -2.0, 2.0)).collect();
        let beta = (0..n).map(|_| uni(8, -2.0, 2.0)).collect();
        let reprs = (0..n).map(|_| uni(2, -1.0, 1.0)).collect();
        RandomTable {
            seed,
            layout,
            sm,
            eps_raw,
            beta,
            reprs,
        }
    }

    pub fn len(&self) -> usize {
        self.sm.len()
    }

    /// ε scores with `s_m` added to every class except NO.
    pub fn eps(&self, i: usize) -> Vec<f64> {
        self.eps_raw[i]
            .iter()
            .enumerate()
            .map(|(k, v)| if k == 0 { *v } else { v + self.sm[i] })
            .collect()
    }

    pub fn beta_at(&self, m: usize, position: usize) -> f64 {
        self.beta[m][position.min(8) - 1]
    }

    pub fn pair(&self, i: usize, members: &[usize]) -> f64 {
        let mut h = DefaultHasher::new();
        (self.seed, i, members).hash(&mut h);
        (h.finish() % 1_000_003) as f64 / 1_000_003.0 * 6.0 - 3.0
    }
}

impl Scorer for RandomTable {
    fn num_mentions(&self) -> usize {
        self.sm.len()
    }
    fn mention_score(&self, i: usize) -> f64 {
        self.sm[i]
    }
    fn repr(&self, i: usize) -> &[f64] {
        &self.reprs[i]
    }
    fn epsilon_scores(&mut self, i: usize) -> Result<Vec<f64>> {
        Ok(self.eps(i))
    }
    fn salience(&mut self, m: usize, position: usize) -> Result<f64> {
        Ok(self.beta_at(m, position))
    }
    fn pair_scores(&mut self, i: usize, states: &[&ClusterState]) -> Result<Vec<f64>> {
        Ok(states.iter().map(|s| self.pair(i, &s.members)).collect())
    }
}

// ---------------------------------------------------------------------------
// step-by-step interpreter of the cluster-ranking pseudo-code

#[derive(Clone, Copy, Debug, PartialEq)]
enum Label {
    No,
    Nr,
    Dn,
    Cluster(usize),
}

/// Output partition and NR markables, both sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct Interpreted {
    pub clusters: Vec<Vec<Span>>,
    pub nonreferring: Vec<(Span, NrType)>,
}

/// Walks the mentions once, keeping a list of cluster versions. Without
/// history a cluster is rewritten in place; with history the
/// extended cluster is appended and `Latest` is followed before extending.
/// The ε part of `Tmp` is `[NO, max NR, DN]`; hybrid modes compare the
/// softmax of `Tmp` at NR with the threshold, keep confident NR decisions,
/// and otherwise fall back to the best DN/cluster option, re-labelling
/// such spans as NR afterwards if they stayed alone.
pub fn interpret(t: &RandomTable, mode: NrMode, history: bool) -> Interpreted {
    // every cluster version: members and the entity it belongs to
    let mut versions: Vec<(Vec<usize>, usize)> = Vec::new();
    // entity -> index of its newest version
    let mut newest: Vec<usize> = Vec::new();
    let mut nr: Vec<(usize, NrType)> = Vec::new();
    let mut low_confidence: Vec<(usize, NrType)> = Vec::new();
    let threshold = match mode {
        NrMode::Prefilter => None,
        NrMode::Hybrid(x) | NrMode::Fine(x) => Some(x),
    };

    for i in 0..t.len() {
        let eps = t.eps(i);
        let last = eps.len() - 1;
        let mut nr_k = 1;
        for k in 1..last {
            if eps[k] > eps[nr_k] {
                nr_k = k;
            }
        }
        let ty = match t.layout {
            EpsilonLayout::Collapsed => NrType::Nr,
            EpsilonLayout::Fine => NrType::FINE[nr_k - 1],
        };
        let mut tmp: Vec<(Label, f64)> = vec![(Label::No, eps[0]), (Label::Nr, eps[nr_k]), (Label::Dn, eps[last])];
        let visible: Vec<usize> = if history {
            (0..versions.len()).collect()
        } else {
            newest.clone()
        };
        for v in visible {
            let members = &versions[v].0;
            let logits: Vec<f64> = members.iter().enumerate().map(|(p, &m)| t.beta_at(m, p + 1)).collect();
            let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - top).exp()).sum();
            let sc: f64 = members
                .iter()
                .zip(&logits)
                .map(|(&m, l)| (l - top).exp() / z * t.sm[m])
                .sum();
            tmp.push((Label::Cluster(v), t.sm[i] + sc + t.pair(i, members)));
        }
        let pick = |allowed: &dyn Fn(Label) -> bool| -> Label {
            let mut best: Option<(Label, f64)> = None;
            for &(l, s) in &tmp {
                if allowed(l) && best.is_none_or(|(_, b)| s > b) {
                    best = Some((l, s));
                }
            }
            best.unwrap().0
        };
        let mut b = pick(&|_| true);
        if b == Label::Nr {
            let confident = match threshold {
                None => true,
                Some(th) => {
                    let z: f64 = tmp.iter().map(|(_, s)| s.exp()).sum();
                    tmp[1].1.exp() / z > th
                }
            };
            if confident {
                nr.push((i, ty));
                continue;
            }
            low_confidence.push((i, ty));
            b = pick(&|l| !matches!(l, Label::No | Label::Nr));
        }
        match b {
            Label::No | Label::Nr => {}
            Label::Dn => {
                versions.push((vec![i], newest.len()));
                newest.push(versions.len() - 1);
            }
            Label::Cluster(v) => {
                let e = versions[v].1;
                let mut members = versions[newest[e]].0.clone();
                members.push(i);
                if history {
                    versions.push((members, e));
                    newest[e] = versions.len() - 1;
                } else {
                    versions[newest[e]].0 = members;
                }
            }
        }
    }

    let mut entities: Vec<Vec<usize>> = newest.iter().map(|&v| versions[v].0.clone()).collect();
    for &(i, ty) in &low_confidence {
        if let Some(k) = entities.iter().position(|e| e == &vec![i]) {
            entities.remove(k);
            nr.push((i, ty));
        }
    }
    let mut clusters: Vec<Vec<Span>> = entities
        .into_iter()
        .map(|e| {
            let mut c: Vec<Span> = e.into_iter().map(span).collect();
            c.sort();
            c
        })
        .collect();
    clusters.sort();
    let mut nonreferring: Vec<(Span, NrType)> = nr.into_iter().map(|(i, ty)| (span(i), ty)).collect();
    nonreferring.sort();
    Interpreted { clusters, nonreferring }
}

// ---------------------------------------------------------------------------
// metric oracles

/// Random key/response pair over single-token spans: at most `max_entities`
/// clusters each, some key mentions missing from the response and some
/// response-only mentions.
pub fn random_partitions<R: Rng>(rng: &mut R, max_entities: usize) -> (Vec<Vec<Span>>, Vec<Vec<Span>>) {
    let side = |pool: &[usize], rng: &mut R| -> Vec<Vec<Span>> {
        let k = rng.random_range(1..=max_entities);
        let mut out: Vec<Vec<Span>> = vec![Vec::new(); k];
        for &m in pool {
            out[rng.random_range(0..k)].push(span(m));
        }
        out.retain(|c| !c.is_empty());
        out
    };
    let n = rng.random_range(1..=14);
    let key_pool: Vec<usize> = (0..n).collect();
    let mut resp_pool: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.8)).collect();
    resp_pool.extend((n..n + 3).filter(|_| rng.random_bool(0.3)));
    let key = side(&key_pool, rng);
    let mut response = side(&resp_pool, rng);
    if response.is_empty() {
        response.push(vec![span(n + 5)]);
    }
    (key, response)
}

fn find(parent: &mut Vec<usize>, x: usize) -> usize {
    if parent[x] != x {
        let r = find(parent, parent[x]);
        parent[x] = r;
    }
    parent[x]
}

/// Σ(|K| − components of K under the other side's links) and Σ(|K| − 1),
/// counting components with union–find over pairs.
fn muc_direct(key: &[Vec<Span>], other: &[Vec<Span>]) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    for k in key {
        let mut parent: Vec<usize> = (0..k.len()).collect();
        for a in 0..k.len() {
            for b in a + 1..k.len() {
                if other.iter().any(|r| r.contains(&k[a]) && r.contains(&k[b])) {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    parent[ra] = rb;
                }
            }
        }
        let comps = (0..k.len()).filter(|&x| find(&mut parent, x) == x).count();
        num += (k.len() - comps) as f64;
        den += k.len() as f64 - 1.0;
    }
    (num, den)
}

fn ratio(n: f64, d: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        n / d
    }
}

fn f(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// `(precision, recall, f1)` by direct counting.
pub fn muc_oracle(key: &[Vec<Span>], response: &[Vec<Span>]) -> (f64, f64, f64) {
    let (rn, rd) = muc_direct(key, response);
    let (pn, pd) = muc_direct(response, key);
    let (p, r) = (ratio(pn, pd), ratio(rn, rd));
    (p, r, f(p, r))
}

fn b3_side(key: &[Vec<Span>], other: &[Vec<Span>]) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    for k in key {
        for m in k {
            den += 1.0;
            if let Some(r) = other.iter().find(|r| r.contains(m)) {
                num += k.iter().filter(|x| r.contains(x)).count() as f64 / k.len() as f64;
            }
        }
    }
    (num, den)
}

pub fn b_cubed_oracle(key: &[Vec<Span>], response: &[Vec<Span>]) -> (f64, f64, f64) {
    let (rn, rd) = b3_side(key, response);
    let (pn, pd) = b3_side(response, key);
    let (p, r) = (ratio(pn, pd), ratio(rn, rd));
    (p, r, f(p, r))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Best alignment found by trying every permutation of the padded sides.
pub fn ceaf_oracle(key: &[Vec<Span>], response: &[Vec<Span>]) -> (f64, f64, f64) {
    let n = key.len().max(response.len());
    let phi = |a: usize, b: usize| -> f64 {
        match (key.get(a), response.get(b)) {
            (Some(k), Some(r)) => {
                let common = k.iter().filter(|s| r.contains(s)).count();
                2.0 * common as f64 / (k.len() + r.len()) as f64
            }
            _ => 0.0,
        }
    };
    let best = permutations(n)
        .into_iter()
        .map(|p| p.iter().enumerate().map(|(a, &b)| phi(a, b)).sum::<f64>())
        .fold(0.0, f64::max);
    let (p, r) = (ratio(best, response.len() as f64), ratio(best, key.len() as f64));
    (p, r, f(p, r))
}

// ---------------------------------------------------------------------------
// finite differences

pub const FD_STEP: f64 = 1e-5;
/// Relative error is `|a − n| / max(|a|, |n|, FD_FLOOR)`.
pub const FD_FLOOR: f64 = 1e-5;

/// Parameters and a loss built from them.
pub struct Case {
    pub name: &'static str,
    pub store: ParamStore,
    pub build: Box<dyn Fn(&mut Graph) -> Var>,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    /// Entries whose ±h evaluations took different branches of a relu or max.
    pub skipped: usize,
    pub max_rel: f64,
    pub worst: String,
}

fn evaluate(case: &Case) -> (f64, Vec<usize>) {
    let mut g = Graph::new(&case.store, Mode::Infer, 0);
    let loss = (case.build)(&mut g);
    (g.value(loss).item(), g.activation_pattern())
}

/// Compares tape gradients with central differences on up to `per_param`
/// random entries of every parameter.
pub fn check_case(case: &mut Case, per_param: usize, seed: u64) -> GradCheck {
    let grads = {
        let mut g = Graph::new(&case.store, Mode::Infer, 0);
        let loss = (case.build)(&mut g);
        g.backward(loss).expect("backward")
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradCheck::default();
    let ids: Vec<_> = case.store.ids().collect();
    for id in ids {
        let n = case.store.get(id).len();
        let mut entries: Vec<usize> = (0..n).collect();
        entries.shuffle(&mut rng);
        entries.truncate(per_param);
        for e in entries {
            let orig = case.store.get(id).data()[e];
            case.store.get_mut(id).data_mut()[e] = orig + FD_STEP;
            let (up, pat_up) = evaluate(case);
            case.store.get_mut(id).data_mut()[e] = orig - FD_STEP;
            let (down, pat_down) = evaluate(case);
            case.store.get_mut(id).data_mut()[e] = orig;
            if pat_up != pat_down {
                out.skipped += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * FD_STEP);
            let analytic = grads.get(id).data()[e];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR);
            out.checked += 1;
            if rel > out.max_rel {
                out.max_rel = rel;
                out.worst = format!("{}[{e}] analytic {analytic:.3e} numeric {numeric:.3e}", case.store.name(id));
            }
        }
    }
    out
}

/// `Σ y ⊙ R` for a fixed random `R`, turning any output into a scalar loss
/// with a generic gradient.
pub fn project(g: &mut Graph, y: Var, seed: u64) -> Var {
    let (r, c) = g.shape(y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let w = g.input(Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()));
    let p = g.mul(y, w).unwrap();
    g.sum(p)
}

pub fn random_tensor<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect())
}

// ---------------------------------------------------------------------------
// gradient cases

use anaphora_core::model::Model;
use anaphora_core::numcore::{BiLstm, CharCnn, Ffnn, Linear, LstmCell};
use anaphora_core::synthetic::synthetic_document;
use anaphora_core::trainer::{document_loss, marginal_nll};

/// Model configuration small enough for per-entry finite differences.
pub fn micro_config() -> TrainConfig {
    TrainConfig {
        lstm_layers: 1,
        lstm_size: 6,
        ffnn_layers: 1,
        ffnn_size: 8,
        cnn_filter_widths: vec![2],
        cnn_filter_size: 3,
        char_embedding_size: 3,
        feature_embedding_size: 3,
        max_span_width: 3,
        head_offset_bias: true,
        ..TrainConfig::default()
    }
}

/// One case per layer, fused op, and loss, plus the whole document loss of
/// a micro model. Inputs and weights are drawn from `seed`.
pub fn gradient_cases(seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();

    let mut store = ParamStore::new();
    let layer = Linear::new(&mut store, "linear", 5, 4, &mut rng);
    let x = random_tensor(&mut rng, 3, 5, 1.0);
    cases.push(Case {
        name: "linear",
        store,
        build: Box::new(move |g| {
            let xv = g.input(x.clone());
            let y = layer.forward(g, xv).unwrap();
            project(g, y, seed)
        }),
    });

    let mut store = ParamStore::new();
    let net = Ffnn::new(&mut store, "ffnn", 5, 2, 6, 3, &mut rng);
    let x = random_tensor(&mut rng, 4, 5, 1.0);
    cases.push(Case {
        name: "ffnn",
        store,
        build: Box::new(move |g| {
            let xv = g.input(x.clone());
            let y = net.forward(g, xv, 0.0).unwrap();
            project(g, y, seed)
        }),
    });

    let mut store = ParamStore::new();
    let cnn = CharCnn::new(&mut store, "cnn", 4, &[2, 3], 5, &mut rng);
    cases.push(Case {
        name: "char_cnn",
        store,
        build: Box::new(move |g| {
            let y = cnn.forward(g, &[b"ab", b"hello", b"x", b"It"]).unwrap();
            project(g, y, seed)
        }),
    });

    for reverse in [false, true] {
        let mut store = ParamStore::new();
        let cell = LstmCell::new(&mut store, "cell", 4, 5, &mut rng);
        let b = store.find("cell/b").unwrap();
        *store.get_mut(b) = random_tensor(&mut rng, 1, 20, 0.5);
        let x = random_tensor(&mut rng, 6, 4, 1.0);
        cases.push(Case {
            name: if reverse { "lstm_cell_reverse" } else { "lstm_cell" },
            store,
            build: Box::new(move |g| {
                let xv = g.input(x.clone());
                let y = cell.forward(g, xv, reverse).unwrap();
                project(g, y, seed)
            }),
        });
    }

    let mut store = ParamStore::new();
    let lstm = BiLstm::new(&mut store, "bilstm", 4, 3, 2, &mut rng);
    let x = random_tensor(&mut rng, 5, 4, 1.0);
    cases.push(Case {
        name: "bilstm",
        store,
        build: Box::new(move |g| {
            let xv = g.input(x.clone());
            let y = lstm.forward(g, xv, 0.0).unwrap();
            project(g, y, seed)
        }),
    });

    let t = 7;
    let mut store = ParamStore::new();
    let scores = store.add("scores", random_tensor(&mut rng, t, 1, 2.0));
    let values = store.add("values", random_tensor(&mut rng, t, 3, 1.0));
    let offsets = store.add("offsets", random_tensor(&mut rng, 4, 1, 1.0));
    let att_spans: Vec<(usize, usize)> = (0..6)
        .map(|_| {
            let s = rng.random_range(0..t);
            (s, (s + rng.random_range(0..4)).min(t - 1))
        })
        .collect();
    cases.push(Case {
        name: "span_attention",
        store,
        build: Box::new(move |g| {
            let (s, v, o) = (g.param(scores), g.param(values), g.param(offsets));
            let y = g.span_attention(s, v, Some(o), &att_spans).unwrap();
            project(g, y, seed)
        }),
    });

    let mut store = ParamStore::new();
    let x = store.add("x", random_tensor(&mut rng, 5, 1, 2.0));
    cases.push(Case {
        name: "softmax",
        store,
        build: Box::new(move |g| {
            let xv = g.param(x);
            let y = g.softmax(xv).unwrap();
            project(g, y, seed)
        }),
    });

    let mut store = ParamStore::new();
    let x = store.add("x", random_tensor(&mut rng, 6, 1, 3.0));
    cases.push(Case {
        name: "logsumexp",
        store,
        build: Box::new(move |g| {
            let xv = g.param(x);
            g.logsumexp(xv).unwrap()
        }),
    });

    let mut store = ParamStore::new();
    let x = store.add("x", random_tensor(&mut rng, 7, 3, 1.0));
    cases.push(Case {
        name: "segment_max",
        store,
        build: Box::new(move |g| {
            let xv = g.param(x);
            let y = g.segment_max(xv, &[3, 1, 3]);
            project(g, y, seed)
        }),
    });

    let n = rng.random_range(2..8);
    let mut gold: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.4)).collect();
    if gold.is_empty() {
        gold.push(rng.random_range(0..n));
    }
    let mut store = ParamStore::new();
    let x = store.add("scores", random_tensor(&mut rng, n, 1, 3.0));
    cases.push(Case {
        name: "marginal_nll",
        store,
        build: Box::new(move |g| {
            let xv = g.param(x);
            marginal_nll(g, xv, &gold).unwrap()
        }),
    });

    let emb = Embeddings::new(EmbeddingTable::Hashed { dim: 4, seed: 0 }, None);
    let doc = synthetic_document(&mut rng, "grad", 3);
    let model = Model::new(micro_config(), 4, seed).unwrap();
    let store = Model::new(micro_config(), 4, seed).unwrap().params;
    cases.push(Case {
        name: "document_loss",
        store,
        build: Box::new(move |g| {
            document_loss(g, &model, &doc, &emb)
                .unwrap()
                .expect("mentions survive pruning")
                .loss
        }),
    });
    cases
}
