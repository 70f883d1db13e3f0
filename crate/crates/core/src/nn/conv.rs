use rand_chacha::ChaCha8Rng;

use super::init::glorot_uniform;
use super::{ForwardCtx, Layer, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Valid-padding 1-D convolution over `[N x in_channels x L]`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_len: usize,
}

impl Conv1d {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_channels: usize,
        out_channels: usize,
        kernel_len: usize,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel_len == 0 {
            return Err(Error::Config("conv1d needs positive channel counts and kernel length".into()));
        }
        let w = glorot_uniform(
            rng,
            in_channels * kernel_len,
            out_channels * kernel_len,
            out_channels * in_channels * kernel_len,
        );
        let kernel = store.add(
            format!("{prefix}/kernel"),
            Tensor::new(vec![out_channels, in_channels, kernel_len], w)?.with_grad(),
        );
        let bias = store.add(format!("{prefix}/bias"), Tensor::zeros(&[out_channels]).with_grad());
        Ok(Self {
            kernel,
            bias,
            in_channels,
            out_channels,
            kernel_len,
        })
    }

    pub fn output_len(&self, input_len: usize) -> Option<usize> {
        input_len.checked_sub(self.kernel_len).map(|l| l + 1)
    }
}

impl Layer for Conv1d {
    fn forward(&self, store: &ParamStore, tape: &mut Tape, x: Var, ctx: &mut ForwardCtx<'_>) -> Result<Var> {
        let w = ctx.bind(store, tape, self.kernel);
        let b = ctx.bind(store, tape, self.bias);
        tape.conv1d(x, w, b)
    }
}
