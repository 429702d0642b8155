//! Model hyperparameters and the declarative run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingSpec;
use crate::decoder::{EpsilonLayout, NrMode, ResolveOptions};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lstm_layers: usize,
    pub lstm_size: usize,
    pub lstm_dropout: f64,
    pub ffnn_layers: usize,
    pub ffnn_size: usize,
    pub ffnn_dropout: f64,
    pub cnn_filter_widths: Vec<usize>,
    pub cnn_filter_size: usize,
    pub char_embedding_size: usize,
    pub feature_embedding_size: usize,
    pub embedding_dropout: f64,
    pub max_span_width: usize,
    pub max_clusters: usize,
    pub mention_ratio: f64,
    pub learning_rate: f64,
    pub decay_rate: f64,
    pub decay_frequency: u64,
    pub train_steps: u64,
    /// Training documents longer than this are split at sentence
    /// boundaries; 0 disables splitting.
    pub max_training_tokens: usize,
    /// Steps between checkpoints / held-out evaluations; 0 evaluates only at
    /// the end.
    pub eval_frequency: u64,
    pub cluster_history: bool,
    pub fine_nr: bool,
    pub position_embeddings: bool,
    pub width_embeddings: bool,
    pub oracle_clusters: bool,
    /// Adds a learned per-offset bias to head-attention scores.
    pub head_offset_bias: bool,
    /// Train on singletons and non-referring markables; when off they are
    /// stripped from training documents.
    pub train_singletons_and_nr: bool,
    /// Known genres; anything else maps to a shared unknown slot.
    pub genres: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lstm_layers: 3,
            lstm_size: 200,
            lstm_dropout: 0.4,
            ffnn_layers: 2,
            ffnn_size: 150,
            ffnn_dropout: 0.2,
            cnn_filter_widths: vec![3, 4, 5],
            cnn_filter_size: 50,
            char_embedding_size: 8,
            feature_embedding_size: 20,
            embedding_dropout: 0.5,
            max_span_width: 30,
            max_clusters: 250,
            mention_ratio: 0.4,
            learning_rate: 1e-3,
            decay_rate: 0.999,
            decay_frequency: 100,
            train_steps: 200_000,
            max_training_tokens: 0,
            eval_frequency: 1000,
            cluster_history: true,
            fine_nr: false,
            position_embeddings: true,
            width_embeddings: true,
            oracle_clusters: true,
            head_offset_bias: false,
            train_singletons_and_nr: true,
            genres: ["bc", "bn", "mz", "nw", "pt", "tc", "wb"]
                .map(String::from)
                .to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("lstm_dropout", self.lstm_dropout),
            ("ffnn_dropout", self.ffnn_dropout),
            ("embedding_dropout", self.embedding_dropout),
            ("mention_ratio", self.mention_ratio),
            ("decay_rate", self.decay_rate),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {r}")));
            }
        }
        // a dropout rate of 1 would zero every activation
        if rates[..3].iter().any(|(_, r)| *r == 1.0) {
            return Err(Error::Config("dropout rates must be below 1".into()));
        }
        let sizes = [
            ("lstm_layers", self.lstm_layers),
            ("lstm_size", self.lstm_size),
            ("ffnn_layers", self.ffnn_layers),
            ("ffnn_size", self.ffnn_size),
            ("cnn_filter_size", self.cnn_filter_size),
            ("char_embedding_size", self.char_embedding_size),
            ("feature_embedding_size", self.feature_embedding_size),
            ("max_span_width", self.max_span_width),
            ("max_clusters", self.max_clusters),
            ("decay_frequency", self.decay_frequency as usize),
        ];
        for (name, s) in sizes {
            if s < 1 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.cnn_filter_widths.is_empty() || self.cnn_filter_widths.contains(&0) {
            return Err(Error::Config("cnn_filter_widths must be nonempty and positive".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        Ok(())
    }

    pub fn layout(&self) -> EpsilonLayout {
        if self.fine_nr {
            EpsilonLayout::Fine
        } else {
            EpsilonLayout::Collapsed
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Train,
    #[default]
    Predict,
    Evaluate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Prefilter,
    #[default]
    Hybrid,
    Fine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SingletonMode {
    Included,
    Excluded,
    #[default]
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub mode: DecodeMode,
    pub threshold: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            mode: DecodeMode::Hybrid,
            threshold: 0.5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub key: Option<PathBuf>,
    pub response: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub singletons: SingletonMode,
    pub paths: Paths,
    pub word_embeddings: EmbeddingSpec,
    pub contextual_embeddings: Option<EmbeddingSpec>,
    pub decoder: DecoderConfig,
    pub model: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::default(),
            seed: 0,
            singletons: SingletonMode::default(),
            paths: Paths::default(),
            word_embeddings: EmbeddingSpec::hashed(50, 0),
            contextual_embeddings: None,
            decoder: DecoderConfig::default(),
            model: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.decoder.threshold.is_nan() || self.decoder.threshold < 0.0 {
            return Err(Error::Config(format!(
                "threshold must be >= 0, got {}",
                self.decoder.threshold
            )));
        }
        self.resolve_options().validate()
    }

    pub fn resolve_options(&self) -> ResolveOptions {
        let t = self.decoder.threshold;
        ResolveOptions {
            mode: match self.decoder.mode {
                DecodeMode::Prefilter => NrMode::Prefilter,
                DecodeMode::Hybrid => NrMode::Hybrid(t),
                DecodeMode::Fine => NrMode::Fine(t),
            },
            history: self.model.cluster_history,
            max_clusters: self.model.max_clusters,
            layout: self.model.layout(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}
