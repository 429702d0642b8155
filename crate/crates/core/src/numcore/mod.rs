//! Dense tensors, a reverse-mode tape, network layers and the optimizer.

mod adam;
mod checkpoint;
mod graph;
mod layers;
mod tensor;

pub use adam::{Adam, OptimizerState};
pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use graph::{logsumexp, softmax, Gradients, Graph, Mode, ParamId, ParamStore, Var};
pub use layers::{glorot, BiLstm, CharCnn, Ffnn, Linear, LstmCell, PAD_BYTE};
pub use tensor::Tensor;
