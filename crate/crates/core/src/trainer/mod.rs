//! Training with oracle (or system) clusters and the marginal likelihood.

mod loss;
mod oracle;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use loss::{marginal_nll, marginal_nll_value};
pub use oracle::{build_oracle_states, epsilon_target, gold_labels, OracleStep};

use crate::corpus::Document;
use crate::decoder::{resolve, NrMode, ResolveOptions};
use crate::encoder::detect_mentions;
use crate::error::{Error, Result};
use crate::metrics::{report, Singletons};
use crate::model::{Embeddings, Model};
use crate::numcore::{Adam, Checkpoint, Gradients, Graph, Mode, Var};
use crate::par::Execution;
use crate::predict::predict_corpus;
use crate::scorer::NeuralScorer;

/// Loss of one document and what it took to build it.
#[derive(Clone, Copy, Debug)]
pub struct DocumentLoss {
    pub loss: Var,
    pub mentions: usize,
}

/// Builds the summed marginal NLL of `doc` on `g`; `None` when pruning
/// leaves no mentions.
pub fn document_loss(
    g: &mut Graph,
    model: &Model,
    doc: &Document,
    emb: &Embeddings,
) -> Result<Option<DocumentLoss>> {
    let Some(m) = detect_mentions(g, model, doc, emb)? else {
        return Ok(None);
    };
    let c = &model.config;
    let layout = c.layout();
    let mut scorer = NeuralScorer::new(g, model, doc, &m, true)?;
    let mut losses = Vec::with_capacity(m.len());
    if c.oracle_clusters {
        let steps = build_oracle_states(
            &m.spans,
            &doc.gold_clusters,
            &doc.gold_nonreferring,
            c.cluster_history,
            c.max_clusters,
            layout,
        );
        for st in steps {
            let members: Vec<&[usize]> = st.candidates.iter().map(Vec::as_slice).collect();
            let clusters = if members.is_empty() {
                None
            } else {
                Some(scorer.cluster_scores(st.mention, &members)?)
            };
            let scores = scorer.candidate_scores(st.mention, clusters)?;
            let gold = st.gold_indices(layout)?;
            losses.push(marginal_nll(scorer.graph(), scores, &gold)?);
        }
    } else {
        let opts = ResolveOptions {
            mode: NrMode::Prefilter,
            history: c.cluster_history,
            max_clusters: c.max_clusters,
            layout,
        };
        let decoded = resolve(&mut scorer, &m.spans, &opts)?;
        let (entity, nr) = gold_labels(&m.spans, &doc.gold_clusters, &doc.gold_nonreferring);
        let n_eps = layout.len();
        for d in &decoded.resolution.trace {
            let i = d.mention;
            let mut gold = Vec::new();
            if let Some(e) = entity[i] {
                for (k, &id) in d.candidates.iter().enumerate() {
                    let state = decoded.store.get(id)?;
                    if state.members.iter().any(|&mm| entity[mm] == Some(e)) {
                        gold.push(n_eps + k);
                    }
                }
            }
            if gold.is_empty() {
                let class = epsilon_target(entity[i], nr[i], layout);
                gold.extend(layout.index_of(class));
            }
            let clusters = scorer.cluster_vars[i];
            let scores = scorer.candidate_scores(i, clusters)?;
            losses.push(marginal_nll(scorer.graph(), scores, &gold)?);
        }
    }
    let stacked = g.concat_rows(&losses)?;
    Ok(Some(DocumentLoss {
        loss: g.sum(stacked),
        mentions: losses.len(),
    }))
}

/// Applies the training-time corpus filters: length splitting, then the
/// optional removal of singletons and non-referring markables (after the
/// split, so no fragment of a cut cluster survives as a singleton).
pub fn prepare_training_documents(model: &Model, docs: &[Document]) -> Vec<Document> {
    let c = &model.config;
    docs.iter()
        .flat_map(|d| {
            if c.max_training_tokens > 0 {
                d.split(c.max_training_tokens)
            } else {
                vec![d.clone()]
            }
        })
        .map(|d| {
            if c.train_singletons_and_nr {
                d
            } else {
                d.without_singletons_and_nonreferring()
            }
        })
        .filter(|d| !d.is_empty())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub loss: f64,
    pub mentions: usize,
    pub skipped: bool,
}

/// Model, optimizer, and step counter.
pub struct Trainer {
    pub model: Model,
    pub adam: Adam,
    pub seed: u64,
}

impl Trainer {
    pub fn new(model: Model, seed: u64) -> Self {
        let c = &model.config;
        let adam = Adam::new(&model.params, c.learning_rate, c.decay_rate, c.decay_frequency);
        Trainer { model, adam, seed }
    }

    pub fn step_count(&self) -> u64 {
        self.adam.state.step
    }

    /// Loss and gradients of one document without updating.
    pub fn loss_and_gradients(&self, doc: &Document, emb: &Embeddings, dropout_seed: u64) -> Result<Option<(f64, usize, Gradients)>> {
        let mut g = Graph::new(&self.model.params, Mode::Train, dropout_seed);
        let Some(dl) = document_loss(&mut g, &self.model, doc, emb)? else {
            return Ok(None);
        };
        let loss = g.value(dl.loss).item();
        if !loss.is_finite() {
            return Ok(Some((loss, dl.mentions, Gradients::zeros_like(&self.model.params))));
        }
        Ok(Some((loss, dl.mentions, g.backward(dl.loss)?)))
    }

    /// One optimizer step on `doc`. Non-finite losses or gradients skip the
    /// update.
    pub fn step(&mut self, doc: &Document, emb: &Embeddings) -> Result<StepResult> {
        let dropout_seed = self
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(self.adam.state.step);
        let Some((loss, mentions, grads)) = self.loss_and_gradients(doc, emb, dropout_seed)? else {
            return Ok(StepResult {
                loss: 0.0,
                mentions: 0,
                skipped: true,
            });
        };
        if !loss.is_finite() {
            log::warn!("non-finite loss on {}; step skipped", doc.doc_key);
            return Ok(StepResult { loss, mentions, skipped: true });
        }
        match self.adam.step(&mut self.model.params, &grads) {
            Ok(()) => Ok(StepResult { loss, mentions, skipped: false }),
            Err(Error::NonFiniteGradient(name)) => {
                log::warn!("non-finite gradient for {name} on {}; step skipped", doc.doc_key);
                Ok(StepResult { loss, mentions, skipped: true })
            }
            Err(e) => Err(e),
        }
    }

    pub fn checkpoint(&self, config_snapshot: &str) -> Checkpoint {
        Checkpoint::capture(config_snapshot.to_string(), &self.model.params, Some(&self.adam.state))
    }
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub steps: u64,
    /// Steps between evaluations / checkpoints; 0 means only at the end.
    pub eval_frequency: u64,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
    /// Decoder settings for held-out evaluation.
    pub resolve: ResolveOptions,
    /// Serialized run configuration stored in checkpoints.
    pub config_snapshot: String,
}

#[derive(Clone, Debug, Default)]
pub struct TrainSummary {
    pub steps: u64,
    /// Loss of every step in order; skipped steps included.
    pub losses: Vec<f64>,
    /// Documents whose steps were skipped.
    pub skipped: Vec<String>,
    pub best_dev_conll: Option<f64>,
    pub best_step: Option<u64>,
    pub mean_step_seconds: f64,
}

fn timestamp() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Runs `opts.steps` steps, one document per step, reshuffling the corpus
/// with the trainer's seed every epoch. With a dev corpus the checkpoint
/// keeps the best held-out CoNLL average; otherwise the latest state.
pub fn train(
    trainer: &mut Trainer,
    emb: &Embeddings,
    train_docs: &[Document],
    dev_docs: Option<&[Document]>,
    opts: &TrainOptions,
) -> Result<TrainSummary> {
    let docs = prepare_training_documents(&trainer.model, train_docs);
    if docs.is_empty() && opts.steps > 0 {
        return Err(Error::Config("no training documents".into()));
    }
    let mut log_out = match &opts.log {
        Some(p) => Some(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?)),
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(trainer.seed);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut cursor = order.len();
    let mut summary = TrainSummary::default();
    let mut step_time = 0.0;
    let is_eval_point = |s: u64| s == opts.steps || (opts.eval_frequency > 0 && s.is_multiple_of(opts.eval_frequency));

    for s in 0..=opts.steps {
        if s > 0 {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let doc = &docs[order[cursor]];
            cursor += 1;
            let t0 = Instant::now();
            let r = trainer.step(doc, emb)?;
            step_time += t0.elapsed().as_secs_f64();
            if r.skipped && r.mentions > 0 {
                summary.skipped.push(doc.doc_key.clone());
            }
            summary.losses.push(r.loss);
            if let Some(out) = log_out.as_mut() {
                writeln!(out, "{s}\t{:.6}\t{:.6e}\t{:.3}", r.loss, trainer.adam.learning_rate(), timestamp())
                    .map_err(|e| Error::io(opts.log.as_ref().unwrap(), e))?;
            }
        }
        if !is_eval_point(s) {
            continue;
        }
        let save = match dev_docs {
            Some(dev) => {
                let pred = predict_corpus(&trainer.model, emb, dev, &opts.resolve, Execution::Parallel)?;
                let conll = report(dev, &pred, Singletons::Included, trainer.model.config.fine_nr)?.conll_f1;
                log::info!("step {s}: dev CoNLL F1 {:.4}", conll);
                let better = summary.best_dev_conll.is_none_or(|b| conll > b);
                if better {
                    summary.best_dev_conll = Some(conll);
                    summary.best_step = Some(s);
                }
                better
            }
            None => true,
        };
        if save {
            if let Some(path) = &opts.checkpoint {
                trainer.checkpoint(&opts.config_snapshot).save(path)?;
            }
        }
    }
    if let Some(out) = log_out.as_mut() {
        out.flush().map_err(|e| Error::io(opts.log.as_ref().unwrap(), e))?;
    }
    summary.steps = opts.steps;
    summary.mean_step_seconds = if opts.steps > 0 { step_time / opts.steps as f64 } else { 0.0 };
    Ok(summary)
}
