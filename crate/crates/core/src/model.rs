//! Trainable parameters of the full network and its input embeddings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::corpus::{Document, EmbeddingTable, DISTANCE_BUCKETS, SIZE_BUCKETS};
use crate::error::{Error, Result};
use crate::numcore::{glorot, BiLstm, CharCnn, Checkpoint, Ffnn, ParamId, ParamStore, Tensor};

/// Word-level inputs: a static or hashed table, optionally concatenated
/// with precomputed contextual vectors.
#[derive(Clone, Debug)]
pub struct Embeddings {
    pub word: EmbeddingTable,
    pub contextual: Option<EmbeddingTable>,
}

impl Embeddings {
    pub fn new(word: EmbeddingTable, contextual: Option<EmbeddingTable>) -> Self {
        Embeddings { word, contextual }
    }

    pub fn dim(&self) -> usize {
        self.word.dim() + self.contextual.as_ref().map_or(0, EmbeddingTable::dim)
    }

    /// `[T, dim]` matrix of word-level inputs for `doc`.
    pub fn token_matrix(&self, doc: &Document) -> Result<Tensor> {
        let dim = self.dim();
        let mut data = Vec::with_capacity(doc.len() * dim);
        for (i, tok) in doc.tokens.iter().enumerate() {
            data.extend_from_slice(&self.word.vector(&doc.doc_key, i, &tok.text)?);
            if let Some(ctx) = &self.contextual {
                data.extend_from_slice(&ctx.vector(&doc.doc_key, i, &tok.text)?);
            }
        }
        Ok(Tensor::matrix(doc.len(), dim, data))
    }
}

const FIRST_LSTM_INPUT: &str = "lstm/layer0/fw/wx";

/// Every trainable tensor of the resolver together with the layer handles
/// that address them.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: TrainConfig,
    pub params: ParamStore,
    /// Dimension of the word-level inputs the model was built for.
    pub word_dim: usize,
    pub char_cnn: CharCnn,
    pub lstm: BiLstm,
    /// `ffnn_α`: head-attention score per token.
    pub head_scorer: Ffnn,
    /// Per-offset head-attention bias `[l, 1]`.
    pub head_offsets: Option<ParamId>,
    /// Width embedding `[l, f]`.
    pub width_emb: Option<ParamId>,
    pub mention_scorer: Ffnn,
    pub epsilon_scorer: Ffnn,
    pub salience_scorer: Ffnn,
    /// Position-in-cluster embedding `[SIZE_BUCKETS, f]`.
    pub position_emb: Option<ParamId>,
    pub pair_scorer: Ffnn,
    /// `[genres + 1, f]`; the last row is the unknown genre.
    pub genre_emb: ParamId,
    pub speaker_emb: ParamId,
    pub distance_emb: ParamId,
    pub size_emb: ParamId,
}

impl Model {
    pub fn new(config: TrainConfig, word_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let f = c.feature_embedding_size;
        let char_cnn = CharCnn::new(
            &mut p,
            "char_cnn",
            c.char_embedding_size,
            &c.cnn_filter_widths,
            c.cnn_filter_size,
            &mut rng,
        );
        let x_dim = word_dim + char_cnn.output_dim();
        let lstm = BiLstm::new(&mut p, "lstm", x_dim, c.lstm_size, c.lstm_layers, &mut rng);
        let xs_dim = lstm.output_dim();
        let head_scorer = Ffnn::new(&mut p, "head", xs_dim, c.ffnn_layers, c.ffnn_size, 1, &mut rng);
        let head_offsets = c
            .head_offset_bias
            .then(|| p.add("head_offsets", Tensor::zeros(c.max_span_width, 1)));
        let width_emb = c
            .width_embeddings
            .then(|| p.add("width_emb", glorot(&mut rng, c.max_span_width, f)));
        let repr_dim = 2 * xs_dim + x_dim + if c.width_embeddings { f } else { 0 };
        let ffnn = |p: &mut ParamStore, name: &str, input: usize, out: usize, rng: &mut ChaCha8Rng| {
            Ffnn::new(p, name, input, c.ffnn_layers, c.ffnn_size, out, rng)
        };
        let mention_scorer = ffnn(&mut p, "mention", repr_dim, 1, &mut rng);
        let epsilon_scorer = ffnn(&mut p, "epsilon", repr_dim, c.layout().len(), &mut rng);
        let sal_in = repr_dim + if c.position_embeddings { f } else { 0 };
        let salience_scorer = ffnn(&mut p, "salience", sal_in, 1, &mut rng);
        let position_emb = c
            .position_embeddings
            .then(|| p.add("position_emb", glorot(&mut rng, SIZE_BUCKETS, f)));
        let pair_scorer = ffnn(&mut p, "pair", 3 * repr_dim + 4 * f, 1, &mut rng);
        let genre_emb = p.add("genre_emb", glorot(&mut rng, c.genres.len() + 1, f));
        let speaker_emb = p.add("speaker_emb", glorot(&mut rng, 2, f));
        let distance_emb = p.add("distance_emb", glorot(&mut rng, DISTANCE_BUCKETS, f));
        let size_emb = p.add("size_emb", glorot(&mut rng, SIZE_BUCKETS, f));
        Ok(Model {
            config,
            params: p,
            word_dim,
            char_cnn,
            lstm,
            head_scorer,
            head_offsets,
            width_emb,
            mention_scorer,
            epsilon_scorer,
            salience_scorer,
            position_emb,
            pair_scorer,
            genre_emb,
            speaker_emb,
            distance_emb,
            size_emb,
        })
    }

    /// Dimension of the word+character input vectors `x_t`.
    pub fn input_dim(&self) -> usize {
        self.word_dim + self.char_cnn.output_dim()
    }

    /// Dimension of span representations `N*`.
    pub fn repr_dim(&self) -> usize {
        self.mention_scorer.input_dim()
    }

    pub fn genre_index(&self, genre: &str) -> usize {
        self.config
            .genres
            .iter()
            .position(|g| g == genre)
            .unwrap_or(self.config.genres.len())
    }

    /// Rebuilds a model with `config` and loads its parameters from `ckpt`.
    /// The word dimension is read off the first LSTM input weight.
    pub fn from_checkpoint(ckpt: &Checkpoint, config: TrainConfig) -> Result<Self> {
        let (_, wx) = ckpt
            .params
            .iter()
            .find(|(name, _)| name == FIRST_LSTM_INPUT)
            .ok_or_else(|| Error::CheckpointMismatch(vec![FIRST_LSTM_INPUT.into()]))?;
        let chars = config.cnn_filter_widths.len() * config.cnn_filter_size;
        let word_dim = wx.rows().checked_sub(chars).ok_or_else(|| {
            Error::CheckpointMismatch(vec![format!("{FIRST_LSTM_INPUT} {:?}", wx.shape())])
        })?;
        let mut model = Model::new(config, word_dim, 0)?;
        ckpt.restore_into(&mut model.params)?;
        Ok(model)
    }

    /// Verifies that `emb` matches the dimension the model was built for.
    pub fn check_embeddings(&self, emb: &Embeddings) -> Result<()> {
        if emb.dim() != self.word_dim {
            return Err(Error::Config(format!(
                "model expects {}-dimensional word inputs, embeddings give {}",
                self.word_dim,
                emb.dim()
            )));
        }
        Ok(())
    }
}
