use super::{ForwardCtx, Layer, Mode, ParamId, ParamStore, StatUpdate};
use crate::error::{Error, Result};
use crate::tensor::{NormStats, Tape, Tensor, Var};

pub const MOMENTUM: f64 = 0.99;
pub const EPSILON: f64 = 1e-3;

/// Batch normalization over one feature axis. Train mode normalizes with
/// batch statistics and queues a running-average update; eval mode uses the
/// running statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub features: usize,
    /// Feature axis of the input.
    pub axis: usize,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, prefix: &str, features: usize, axis: usize) -> Self {
        Self {
            gamma: store.add(format!("{prefix}/gamma"), Tensor::filled(&[features], 1.0).with_grad()),
            beta: store.add(format!("{prefix}/beta"), Tensor::zeros(&[features]).with_grad()),
            running_mean: store.add(format!("{prefix}/running_mean"), Tensor::zeros(&[features])),
            running_var: store.add(format!("{prefix}/running_var"), Tensor::filled(&[features], 1.0)),
            features,
            axis,
            momentum: MOMENTUM,
            epsilon: EPSILON,
        }
    }
}

impl Layer for BatchNorm {
    fn forward(&self, store: &ParamStore, tape: &mut Tape, x: Var, ctx: &mut ForwardCtx<'_>) -> Result<Var> {
        let gamma = ctx.bind(store, tape, self.gamma);
        let beta = ctx.bind(store, tape, self.beta);
        match ctx.mode {
            Mode::Train => {
                let batch = tape.shape(x).first().copied().unwrap_or(0);
                if batch < 2 {
                    return Err(Error::Validation(format!(
                        "batch normalization in train mode needs a batch of at least 2, got {batch}"
                    )));
                }
                let out = tape.batch_norm(x, gamma, beta, self.axis, self.epsilon, NormStats::Batch)?;
                ctx.push_stats(StatUpdate {
                    running_mean: self.running_mean,
                    running_var: self.running_var,
                    momentum: self.momentum,
                    mean: out.mean,
                    var: out.var,
                });
                Ok(out.out)
            }
            Mode::Eval => {
                let stats = NormStats::Fixed {
                    mean: store.get(self.running_mean).data(),
                    var: store.get(self.running_var).data(),
                };
                Ok(tape.batch_norm(x, gamma, beta, self.axis, self.epsilon, stats)?.out)
            }
        }
    }
}
