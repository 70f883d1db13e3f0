use rand::Rng;

use super::{ForwardCtx, Layer, Mode, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Inverted dropout: in train mode each unit is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; eval mode is the
/// identity.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        Ok(Self { rate })
    }
}

impl Layer for Dropout {
    fn forward(&self, _store: &ParamStore, tape: &mut Tape, x: Var, ctx: &mut ForwardCtx<'_>) -> Result<Var> {
        if ctx.mode == Mode::Eval || self.rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - self.rate;
        let scale = 1.0 / keep;
        let shape = tape.shape(x).to_vec();
        let n = tape.value(x).len();
        let rng = ctx.rng()?;
        let mask: Vec<f64> = (0..n).map(|_| if rng.gen::<f64>() < keep { scale } else { 0.0 }).collect();
        let mask = tape.constant(Tensor::new(shape, mask)?);
        tape.mul(x, mask)
    }
}
