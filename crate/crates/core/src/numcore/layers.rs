//! Network layers built on the tape: feedforward scorers, the character
//! CNN, and the stacked bidirectional LSTM.

use rand::Rng;

use super::graph::{Graph, ParamId, ParamStore, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Glorot-uniform `[rows, cols]` matrix.
pub fn glorot<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-limit..=limit))
            .collect(),
    )
}

/// Affine map `x·W + b` with `W: [input, output]`, `b: [1, output]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(format!("{name}/w"), glorot(rng, input, output));
        let bias = store.add(format!("{name}/b"), Tensor::zeros(1, output));
        Linear {
            weight,
            bias,
            input,
            output,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (_, cols) = g.shape(x);
        if cols != self.input {
            return Err(Error::Shape {
                op: "linear",
                left: g.value(x).shape().to_vec(),
                right: g.params().get(self.weight).shape().to_vec(),
            });
        }
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let xw = g.matmul(x, w)?;
        g.add(xw, b)
    }
}

/// Feedforward network: `depth` rectified hidden layers of `width` units,
/// then a linear output layer.
#[derive(Clone, Debug)]
pub struct Ffnn {
    pub hidden: Vec<Linear>,
    pub output: Linear,
}

impl Ffnn {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        depth: usize,
        width: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        let mut hidden = Vec::with_capacity(depth);
        let mut dim = input;
        for k in 0..depth {
            hidden.push(Linear::new(store, &format!("{name}/hidden{k}"), dim, width, rng));
            dim = width;
        }
        let output = Linear::new(store, &format!("{name}/output"), dim, output, rng);
        Ffnn { hidden, output }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.first().map_or(self.output.input, |l| l.input)
    }

    /// Applies the network to each row of `x`. Dropout (inverted, training
    /// only) follows every hidden activation.
    pub fn forward(&self, g: &mut Graph, x: Var, dropout: f64) -> Result<Var> {
        let mut h = x;
        for layer in &self.hidden {
            let z = layer.forward(g, h)?;
            let a = g.relu(z);
            h = g.dropout(a, dropout);
        }
        self.output.forward(g, h)
    }
}

/// Character CNN: max-pooled rectified convolutions over byte embeddings,
/// one filter bank per width, concatenated.
#[derive(Clone, Debug)]
pub struct CharCnn {
    pub embedding: ParamId,
    pub filters: Vec<(usize, Linear)>,
    pub char_dim: usize,
    pub filter_size: usize,
}

/// Byte index reserved for padding.
pub const PAD_BYTE: usize = 0;

impl CharCnn {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        char_dim: usize,
        widths: &[usize],
        filter_size: usize,
        rng: &mut R,
    ) -> Self {
        let embedding = store.add(format!("{name}/embedding"), glorot(rng, 256, char_dim));
        let filters = widths
            .iter()
            .map(|&w| {
                (
                    w,
                    Linear::new(store, &format!("{name}/conv{w}"), w * char_dim, filter_size, rng),
                )
            })
            .collect();
        CharCnn {
            embedding,
            filters,
            char_dim,
            filter_size,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.filters.len() * self.filter_size
    }

    fn max_width(&self) -> usize {
        self.filters.iter().map(|(w, _)| *w).max().unwrap_or(1)
    }

    /// Encodes each token (as bytes) to a `[n_tokens, output_dim]` matrix.
    /// Tokens shorter than the widest filter are right-padded.
    pub fn forward(&self, g: &mut Graph, tokens: &[&[u8]]) -> Result<Var> {
        let emb = g.param(self.embedding);
        let pad_to = self.max_width();
        let padded: Vec<Vec<usize>> = tokens
            .iter()
            .map(|t| {
                let mut ids: Vec<usize> = t.iter().map(|&b| b as usize).collect();
                ids.resize(ids.len().max(pad_to), PAD_BYTE);
                ids
            })
            .collect();
        let mut pooled = Vec::with_capacity(self.filters.len());
        for (w, conv) in &self.filters {
            let mut idx = Vec::new();
            let mut lengths = Vec::with_capacity(padded.len());
            for ids in &padded {
                let n = ids.len() - w + 1;
                for start in 0..n {
                    idx.extend_from_slice(&ids[start..start + w]);
                }
                lengths.push(n);
            }
            let windows = g.gather_rows(emb, &idx);
            let total: usize = lengths.iter().sum();
            let flat = g.reshape(windows, total, w * self.char_dim)?;
            let z = conv.forward(g, flat)?;
            let a = g.relu(z);
            pooled.push(g.segment_max(a, &lengths));
        }
        g.concat_cols(&pooled)
    }
}

/// One direction of one LSTM layer. Gate order in the fused weights is
/// input, forget, output, candidate.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub input_weight: ParamId,
    pub hidden_weight: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        LstmCell {
            input_weight: store.add(format!("{name}/wx"), glorot(rng, input, 4 * hidden)),
            hidden_weight: store.add(format!("{name}/wh"), glorot(rng, hidden, 4 * hidden)),
            bias: store.add(format!("{name}/b"), Tensor::zeros(1, 4 * hidden)),
            hidden,
        }
    }

    /// Runs the recurrence over the rows of `x`, returning `[T, hidden]` in
    /// input order.
    pub fn forward(&self, g: &mut Graph, x: Var, reverse: bool) -> Result<Var> {
        let steps = g.shape(x).0;
        let h_dim = self.hidden;
        let wx = g.param(self.input_weight);
        let wh = g.param(self.hidden_weight);
        let b = g.param(self.bias);
        let xw = g.matmul(x, wx)?;
        let xw = g.add(xw, b)?;
        let mut h = g.input(Tensor::zeros(1, h_dim));
        let mut c = g.input(Tensor::zeros(1, h_dim));
        let mut outputs = vec![h; steps];
        let order: Vec<usize> = if reverse {
            (0..steps).rev().collect()
        } else {
            (0..steps).collect()
        };
        for t in order {
            let xt = g.slice_rows(xw, t, 1);
            let hw = g.matmul(h, wh)?;
            let z = g.add(xt, hw)?;
            let zi = g.slice_cols(z, 0, h_dim);
            let zf = g.slice_cols(z, h_dim, h_dim);
            let zo = g.slice_cols(z, 2 * h_dim, h_dim);
            let zu = g.slice_cols(z, 3 * h_dim, h_dim);
            let i = g.sigmoid(zi);
            let f = g.sigmoid(zf);
            let o = g.sigmoid(zo);
            let u = g.tanh(zu);
            let fc = g.mul(f, c)?;
            let iu = g.mul(i, u)?;
            c = g.add(fc, iu)?;
            let tc = g.tanh(c);
            h = g.mul(o, tc)?;
            outputs[t] = h;
        }
        g.concat_rows(&outputs)
    }
}

/// Stacked bidirectional LSTM; each layer feeds `forward ∥ backward` to the
/// next.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub layers: Vec<(LstmCell, LstmCell)>,
}

impl BiLstm {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        rng: &mut R,
    ) -> Self {
        let mut out = Vec::with_capacity(layers);
        let mut dim = input;
        for k in 0..layers {
            let fw = LstmCell::new(store, &format!("{name}/layer{k}/fw"), dim, hidden, rng);
            let bw = LstmCell::new(store, &format!("{name}/layer{k}/bw"), dim, hidden, rng);
            out.push((fw, bw));
            dim = 2 * hidden;
        }
        BiLstm { layers: out }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |(fw, _)| 2 * fw.hidden)
    }

    /// Encodes one sentence `[T, input]` to `[T, 2·hidden]`. Dropout is
    /// applied to every layer's output.
    pub fn forward(&self, g: &mut Graph, x: Var, dropout: f64) -> Result<Var> {
        let mut h = x;
        for (fw, bw) in &self.layers {
            let f = fw.forward(g, h, false)?;
            let b = bw.forward(g, h, true)?;
            let cat = g.concat_cols(&[f, b])?;
            h = g.dropout(cat, dropout);
        }
        Ok(h)
    }
}
