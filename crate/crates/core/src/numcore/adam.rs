use super::graph::{Gradients, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam with a staircase exponential learning-rate decay: every
/// `decay_frequency` completed steps the rate is multiplied by `decay_rate`.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub base_lr: f64,
    pub decay_rate: f64,
    pub decay_frequency: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub state: OptimizerState,
}

/// Moment estimates and step counter.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct OptimizerState {
    pub step: u64,
    pub first: Vec<Tensor>,
    pub second: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamStore, base_lr: f64, decay_rate: f64, decay_frequency: u64) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(_, t)| Tensor::zeros(t.rows(), t.cols()))
                .collect::<Vec<_>>()
        };
        Adam {
            base_lr,
            decay_rate,
            decay_frequency: decay_frequency.max(1),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            state: OptimizerState {
                step: 0,
                first: zeros(),
                second: zeros(),
            },
        }
    }

    /// Learning rate for the next update.
    pub fn learning_rate(&self) -> f64 {
        let events = self.state.step / self.decay_frequency;
        self.base_lr * self.decay_rate.powi(events as i32)
    }

    /// Applies one update. A non-finite gradient aborts the whole step before
    /// any parameter or moment is touched.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<()> {
        for id in params.ids() {
            if !grads.get(id).is_finite() {
                return Err(Error::NonFiniteGradient(params.name(id).to_string()));
            }
        }
        let lr = self.learning_rate();
        self.state.step += 1;
        let t = self.state.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for id in params.ids() {
            let g = grads.get(id).data();
            let m = self.state.first[id.0].data_mut();
            let v = self.state.second[id.0].data_mut();
            let p = params.get_mut(id).data_mut();
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                p[k] -= lr * mh / (vh.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
