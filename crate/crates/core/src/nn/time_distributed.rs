use super::{ForwardCtx, Layer, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};

/// Applies `inner` to every timestep of `[B x T x ...]` with shared
/// parameters, by folding time into the batch axis.
#[derive(Debug, Clone)]
pub struct TimeDistributed<L> {
    pub inner: L,
}

impl<L> TimeDistributed<L> {
    pub fn new(inner: L) -> Self {
        Self { inner }
    }
}

impl<L: Layer> Layer for TimeDistributed<L> {
    fn forward(&self, store: &ParamStore, tape: &mut Tape, x: Var, ctx: &mut ForwardCtx<'_>) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        if shape.len() < 3 {
            return Err(Error::dim("time_distributed", &[&shape], "expected [B x T x ...]"));
        }
        let (b, t) = (shape[0], shape[1]);
        let mut folded = vec![b * t];
        folded.extend_from_slice(&shape[2..]);
        let xf = tape.reshape(x, &folded)?;
        let y = self.inner.forward(store, tape, xf, ctx)?;
        let mut out = vec![b, t];
        out.extend_from_slice(&tape.shape(y)[1..]);
        tape.reshape(y, &out)
    }
}
