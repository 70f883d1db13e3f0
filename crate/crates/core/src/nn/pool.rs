use super::{ForwardCtx, Layer, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};

/// Mean over the last (length) axis: `[N x C x L] -> [N x C]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GlobalAvgPool;

impl Layer for GlobalAvgPool {
    fn forward(&self, _store: &ParamStore, tape: &mut Tape, x: Var, _ctx: &mut ForwardCtx<'_>) -> Result<Var> {
        let rank = tape.shape(x).len();
        if rank < 2 {
            return Err(Error::dim("global_avg_pool", &[tape.shape(x)], "expected [N x C x L]"));
        }
        tape.mean(x, Some(rank - 1))
    }
}
