//! `anaphora`: batch train / predict / evaluate.
//!
//! Every run is driven by one TOML config; command-line flags override it.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anaphora_core::config::{Command, DecodeMode, RunConfig, SingletonMode};
use anaphora_core::corpus::{load_embeddings, read_corpus, write_extended_json, Document};
use anaphora_core::metrics::{render_json, render_text, report, EvalReport, Singletons};
use anaphora_core::model::{Embeddings, Model};
use anaphora_core::numcore::Checkpoint;
use anaphora_core::par::Execution;
use anaphora_core::predict::predict_corpus;
use anaphora_core::synthetic::synthetic_corpus;
use anaphora_core::trainer::{train, TrainOptions, Trainer};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] anaphora_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "anaphora", version, about = "Cluster-ranking anaphora resolution")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Train a model; keeps the checkpoint with the best dev CoNLL F1.
    Train,
    /// Resolve every document of `--input` and write extended-format JSONL.
    Predict,
    /// Score `--response` against `--key`.
    Evaluate,
    /// Print the effective configuration as TOML.
    Config,
    /// Write a synthetic corpus for smoke tests.
    Synth {
        #[arg(long, default_value_t = 10)]
        docs: usize,
        #[arg(long, default_value_t = 5)]
        events: usize,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Prefilter,
    Hybrid,
    Fine,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SingletonArg {
    Included,
    Excluded,
    Both,
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// NR confidence threshold for hybrid and fine decoding.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Drop historical cluster states from decoder candidates.
    #[arg(long, global = true)]
    no_cluster_history: bool,
    #[arg(long, global = true)]
    no_position_emb: bool,
    #[arg(long, global = true)]
    no_width_emb: bool,
    /// Train against the model's own clusters instead of oracle clusters.
    #[arg(long, global = true)]
    system_clusters: bool,
    #[arg(long, global = true, value_enum)]
    singletons: Option<SingletonArg>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    train: Option<PathBuf>,
    #[arg(long, global = true)]
    dev: Option<PathBuf>,
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    log: Option<PathBuf>,
    #[arg(long, global = true)]
    key: Option<PathBuf>,
    #[arg(long, global = true)]
    response: Option<PathBuf>,
    /// Report file; JSON when the extension is `.json`, text otherwise.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// Overrides the configured number of training steps.
    #[arg(long, global = true)]
    steps: Option<u64>,
}

impl Flags {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(m) = self.mode {
            cfg.decoder.mode = match m {
                ModeArg::Prefilter => DecodeMode::Prefilter,
                ModeArg::Hybrid => DecodeMode::Hybrid,
                ModeArg::Fine => DecodeMode::Fine,
            };
        }
        if let Some(t) = self.threshold {
            cfg.decoder.threshold = t;
        }
        if self.no_cluster_history {
            cfg.model.cluster_history = false;
        }
        if self.no_position_emb {
            cfg.model.position_embeddings = false;
        }
        if self.no_width_emb {
            cfg.model.width_embeddings = false;
        }
        if self.system_clusters {
            cfg.model.oracle_clusters = false;
        }
        if let Some(s) = self.singletons {
            cfg.singletons = match s {
                SingletonArg::Included => SingletonMode::Included,
                SingletonArg::Excluded => SingletonMode::Excluded,
                SingletonArg::Both => SingletonMode::Both,
            };
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.steps {
            cfg.model.train_steps = n;
        }
        let p = &mut cfg.paths;
        let pairs = [
            (&mut p.train, &self.train),
            (&mut p.dev, &self.dev),
            (&mut p.input, &self.input),
            (&mut p.output, &self.output),
            (&mut p.checkpoint, &self.checkpoint),
            (&mut p.log, &self.log),
            (&mut p.key, &self.key),
            (&mut p.response, &self.response),
            (&mut p.report, &self.report),
        ];
        for (slot, flag) in pairs {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
    }
}

fn required<'a>(path: &'a Option<PathBuf>, name: &str) -> CliResult<&'a Path> {
    path.as_deref()
        .ok_or_else(|| CliError::Usage(format!("missing required path `{name}`")))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn embeddings(cfg: &RunConfig) -> CliResult<Embeddings> {
    let word = load_embeddings(&cfg.word_embeddings)?;
    let contextual = cfg
        .contextual_embeddings
        .as_ref()
        .map(load_embeddings)
        .transpose()?;
    Ok(Embeddings::new(word, contextual))
}

/// Builds the effective configuration. For prediction without an explicit
/// config file the snapshot stored in the checkpoint is the base.
fn resolve_config(flags: &Flags, command: Option<Command>) -> CliResult<(RunConfig, Option<Checkpoint>)> {
    let mut ckpt = None;
    let mut cfg = match &flags.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if command == Some(Command::Predict) {
        let mut probe = cfg.clone();
        flags.apply(&mut probe);
        let loaded = Checkpoint::load(required(&probe.paths.checkpoint, "checkpoint")?)?;
        if flags.config.is_none() {
            cfg = RunConfig::from_toml(&loaded.config)?;
        }
        ckpt = Some(loaded);
    }
    if let Some(c) = command {
        cfg.command = c;
    }
    flags.apply(&mut cfg);
    cfg.validate()?;
    Ok((cfg, ckpt))
}

fn cmd_train(cfg: &RunConfig) -> CliResult<()> {
    let train_docs = read_corpus(required(&cfg.paths.train, "train")?)?;
    let dev_docs = cfg.paths.dev.as_deref().map(read_corpus).transpose()?;
    let emb = embeddings(cfg)?;
    let model = Model::new(cfg.model.clone(), emb.dim(), cfg.seed)?;
    let mut trainer = Trainer::new(model, cfg.seed);
    let opts = TrainOptions {
        steps: cfg.model.train_steps,
        eval_frequency: cfg.model.eval_frequency,
        checkpoint: cfg.paths.checkpoint.clone(),
        log: cfg.paths.log.clone(),
        resolve: cfg.resolve_options(),
        config_snapshot: cfg.to_toml(),
    };
    log::info!(
        "training on {} documents for {} steps",
        train_docs.len(),
        opts.steps
    );
    let summary = train(&mut trainer, &emb, &train_docs, dev_docs.as_deref(), &opts)?;
    if !summary.skipped.is_empty() {
        log::warn!("{} steps skipped on non-finite gradients", summary.skipped.len());
    }
    match (summary.best_step, summary.best_dev_conll) {
        (Some(step), Some(f1)) => println!("best dev CoNLL F1 {:.4} at step {step}", 100.0 * f1),
        _ => println!("trained {} steps", summary.steps),
    }
    println!("mean step time {:.2} ms", 1e3 * summary.mean_step_seconds);
    Ok(())
}

fn cmd_predict(cfg: &RunConfig, ckpt: &Checkpoint) -> CliResult<()> {
    let model = Model::from_checkpoint(ckpt, cfg.model.clone())?;
    let emb = embeddings(cfg)?;
    model.check_embeddings(&emb)?;
    let docs = read_corpus(required(&cfg.paths.input, "input")?)?;
    let out = required(&cfg.paths.output, "output")?;
    let pred = predict_corpus(&model, &emb, &docs, &cfg.resolve_options(), Execution::Parallel)?;
    write_file(out, &write_extended_json(&pred))?;
    log::info!("wrote {} documents to {}", pred.len(), out.display());
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig) -> CliResult<()> {
    let key = read_corpus(required(&cfg.paths.key, "key")?)?;
    let response = read_corpus(required(&cfg.paths.response, "response")?)?;
    let fine = cfg.model.fine_nr || cfg.decoder.mode == DecodeMode::Fine;
    let blocks: &[Singletons] = match cfg.singletons {
        SingletonMode::Included => &[Singletons::Included],
        SingletonMode::Excluded => &[Singletons::Excluded],
        SingletonMode::Both => &[Singletons::Included, Singletons::Excluded],
    };
    let reports = blocks
        .iter()
        .map(|s| report(&key, &response, *s, fine))
        .collect::<Result<Vec<EvalReport>, _>>()?;
    let text = render_text(&reports);
    print!("{text}");
    if let Some(path) = &cfg.paths.report {
        let is_json = path.extension().is_some_and(|e| e == "json");
        write_file(path, &if is_json { render_json(&reports) } else { text })?;
    }
    Ok(())
}

fn cmd_synth(cfg: &RunConfig, docs: usize, events: usize) -> CliResult<()> {
    let corpus: Vec<Document> = synthetic_corpus(docs, events, cfg.seed);
    let text = write_extended_json(&corpus);
    match &cfg.paths.output {
        Some(path) => write_file(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let command = match cli.command {
        Cmd::Train => Command::Train,
        Cmd::Evaluate => Command::Evaluate,
        Cmd::Predict => Command::Predict,
        Cmd::Config | Cmd::Synth { .. } => {
            let (cfg, _) = resolve_config(&cli.flags, None)?;
            return match cli.command {
                Cmd::Synth { docs, events } => cmd_synth(&cfg, docs, events),
                _ => {
                    print!("{}", cfg.to_toml());
                    Ok(())
                }
            };
        }
    };
    let (cfg, ckpt) = resolve_config(&cli.flags, Some(command))?;
    match command {
        Command::Train => cmd_train(&cfg),
        Command::Predict => cmd_predict(&cfg, ckpt.as_ref().expect("loaded for predict")),
        Command::Evaluate => cmd_evaluate(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
