use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::init::glorot_uniform;
use super::{ForwardCtx, Layer, ParamId, ParamStore};
use crate::error::Result;
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    None,
    Softmax,
}

/// Affine map `x @ W + b` on `[batch x in]`, optionally followed by softmax.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weights: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        inputs: usize,
        outputs: usize,
        activation: Activation,
    ) -> Result<Self> {
        let w = glorot_uniform(rng, inputs, outputs, inputs * outputs);
        Ok(Self {
            weights: store.add(format!("{prefix}/weights"), Tensor::new(vec![inputs, outputs], w)?.with_grad()),
            bias: store.add(format!("{prefix}/bias"), Tensor::zeros(&[outputs]).with_grad()),
            inputs,
            outputs,
            activation,
        })
    }
}

impl Layer for Dense {
    fn forward(&self, store: &ParamStore, tape: &mut Tape, x: Var, ctx: &mut ForwardCtx<'_>) -> Result<Var> {
        let w = ctx.bind(store, tape, self.weights);
        let b = ctx.bind(store, tape, self.bias);
        let z = tape.matmul(x, w)?;
        let z = tape.add_bias(z, b)?;
        match self.activation {
            Activation::None => Ok(z),
            Activation::Softmax => tape.softmax(z),
        }
    }
}
