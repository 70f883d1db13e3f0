use rand_chacha::ChaCha8Rng;

use super::init::glorot_uniform;
use super::{ForwardCtx, Layer, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Initial value of the forget-gate bias segment.
pub const FORGET_BIAS: f64 = 0.5;

/// LSTM with gate order (input, forget, candidate, output) and zero initial
/// state. Kernels: input `[input_dim x 4U]`, recurrent `[U x 4U]`, bias `[4U]`.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub input_kernel: ParamId,
    pub recurrent_kernel: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub units: usize,
    pub return_sequences: bool,
}

impl Lstm {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        input_dim: usize,
        units: usize,
        return_sequences: bool,
    ) -> Result<Self> {
        if input_dim == 0 || units == 0 {
            return Err(Error::Config("lstm needs positive input size and units".into()));
        }
        let g4 = 4 * units;
        let w = glorot_uniform(rng, input_dim, g4, input_dim * g4);
        let u = glorot_uniform(rng, units, g4, units * g4);
        let mut b = vec![0.0; g4];
        b[units..2 * units].iter_mut().for_each(|v| *v = FORGET_BIAS);
        Ok(Self {
            input_kernel: store.add(format!("{prefix}/input_kernel"), Tensor::new(vec![input_dim, g4], w)?.with_grad()),
            recurrent_kernel: store.add(
                format!("{prefix}/recurrent_kernel"),
                Tensor::new(vec![units, g4], u)?.with_grad(),
            ),
            bias: store.add(format!("{prefix}/bias"), Tensor::from_vec(b).with_grad()),
            input_dim,
            units,
            return_sequences,
        })
    }
}

impl Layer for Lstm {
    fn forward(&self, store: &ParamStore, tape: &mut Tape, x: Var, ctx: &mut ForwardCtx<'_>) -> Result<Var> {
        let shape = tape.shape(x);
        if shape.len() != 3 || shape[2] != self.input_dim || shape[1] == 0 {
            return Err(Error::dim(
                "lstm",
                &[shape, &[self.input_dim, 4 * self.units]],
                format!("expected [batch x T x {}] input", self.input_dim),
            ));
        }
        let w = ctx.bind(store, tape, self.input_kernel);
        let u = ctx.bind(store, tape, self.recurrent_kernel);
        let b = ctx.bind(store, tape, self.bias);
        tape.lstm(x, w, u, b, self.return_sequences)
    }
}
