//! Layer vocabulary for both streams: 1-D convolution, batch normalization,
//! dropout, global average pooling, LSTM, dense, and a time-distributed
//! wrapper. Layers hold only configuration and [`ParamId`]s; the tensors live
//! in a [`ParamStore`] so a frozen model can be shared between threads.

mod batchnorm;
mod conv;
mod dense;
mod dropout;
pub mod init;
mod lstm;
mod params;
mod pool;
mod time_distributed;

pub use batchnorm::BatchNorm;
pub use conv::Conv1d;
pub use dense::{Activation, Dense};
pub use dropout::Dropout;
pub use lstm::{Lstm, FORGET_BIAS};
pub use params::{ParamId, ParamStore, StatUpdate};
pub use pool::GlobalAvgPool;
pub use time_distributed::TimeDistributed;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Per-forward-pass state: mode, dropout randomness, the tape leaves bound to
/// each parameter, and batch statistics waiting to be folded into the
/// running averages.
pub struct ForwardCtx<'r> {
    pub mode: Mode,
    rng: Option<&'r mut ChaCha8Rng>,
    bindings: Vec<Option<Var>>,
    stat_updates: Vec<StatUpdate>,
}

impl<'r> ForwardCtx<'r> {
    pub fn train(rng: &'r mut ChaCha8Rng) -> Self {
        Self {
            mode: Mode::Train,
            rng: Some(rng),
            bindings: Vec::new(),
            stat_updates: Vec::new(),
        }
    }

    pub fn eval() -> Self {
        Self {
            mode: Mode::Eval,
            rng: None,
            bindings: Vec::new(),
            stat_updates: Vec::new(),
        }
    }

    /// Tape leaf for parameter `id`, recorded once per pass.
    pub fn bind(&mut self, store: &ParamStore, tape: &mut Tape, id: ParamId) -> Var {
        let i = id.index();
        if self.bindings.len() <= i {
            self.bindings.resize(i + 1, None);
        }
        *self.bindings[i].get_or_insert_with(|| tape.param(i, store.get(id)))
    }

    /// Parameters bound during this pass.
    pub fn bound(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.bindings
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (ParamId::new(i), v)))
    }

    pub(crate) fn rng(&mut self) -> Result<&mut ChaCha8Rng> {
        self.rng
            .as_deref_mut()
            .ok_or_else(|| Error::State("train-mode forward pass needs a random generator".into()))
    }

    pub(crate) fn push_stats(&mut self, update: StatUpdate) {
        self.stat_updates.push(update);
    }

    pub fn take_stat_updates(&mut self) -> Vec<StatUpdate> {
        std::mem::take(&mut self.stat_updates)
    }
}

/// A differentiable, parameterized unit.
pub trait Layer {
    fn forward(&self, store: &ParamStore, tape: &mut Tape, x: Var, ctx: &mut ForwardCtx<'_>) -> Result<Var>;
}
