use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::history::{EpochRecord, TrainHistory};
use super::nets::{StreamKind, StreamModel};
use crate::error::{Error, Result};
use crate::fusion::argmax;
use crate::nn::{ForwardCtx, Mode, ParamStore};
use crate::tensor::{Adam, AdamConfig, Tape, Tensor, CLAMP_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl TrainConfig {
    /// Epoch budgets by profile: `default` trains inertial for 100 and
    /// vision for 200 epochs, `utd-vision` trains vision for 500.
    pub fn profile(name: &str, kind: StreamKind, seed: u64) -> Result<Self> {
        let epochs = match (name, kind) {
            ("default" | "utd-vision", StreamKind::Inertial) => 100,
            ("default", StreamKind::Vision) => 200,
            ("utd-vision", StreamKind::Vision) => 500,
            (other, _) => {
                return Err(Error::Config(format!(
                    "unknown train profile {other:?} (expected default or utd-vision)"
                )))
            }
        };
        Ok(Self {
            batch_size: 32,
            adam: AdamConfig::default(),
            epochs,
            seed,
            shuffle: true,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be positive".into()));
        }
        if !(self.adam.lr >= 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and >= 0", self.adam.lr)));
        }
        Ok(())
    }
}

/// Result of a training run. The model passed to [`train`] ends with the
/// final parameters; `best` holds the parameters of the best validation
/// epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: TrainHistory,
    pub best_epoch: usize,
    pub best: ParamStore,
}

/// Splits a permutation into batches, folding a trailing single sample into
/// the previous batch (batch norm needs two samples in train mode).
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = order.len() - 1 - out.last().map_or(0, |b| b.len());
        *out.last_mut().expect("at least one batch") = &order[start..];
    }
    out
}

fn params_finite(store: &ParamStore) -> bool {
    store.iter().all(|(_, _, t)| t.all_finite())
}

fn loss_and_hits(probs: &[f64], labels: &[usize], classes: usize) -> (f64, usize) {
    let mut loss = 0.0;
    let mut hits = 0;
    for (row, &y) in probs.chunks(classes).zip(labels) {
        loss -= row[y].clamp(CLAMP_FLOOR, 1.0).ln();
        hits += usize::from(argmax(row) == y);
    }
    (loss, hits)
}

/// Mean cross-entropy and accuracy of an eval-mode model on `(x, y)`.
pub(crate) fn evaluate_loss(model: &StreamModel, x: &Tensor, y: &[usize]) -> Result<(f64, f64)> {
    let probs = model.predict_scores(x)?;
    let (loss, hits) = loss_and_hits(probs.data(), y, model.spec.n_classes);
    Ok((loss / y.len() as f64, hits as f64 / y.len() as f64))
}

/// Minibatch training with Adam on categorical cross-entropy. Each epoch
/// is followed by an eval-mode pass over the validation set; the epoch with
/// the highest validation accuracy (lowest validation loss on ties) is kept
/// as `best`. Train metrics are averaged over the epoch's train-mode batches.
pub fn train(
    model: &mut StreamModel,
    train_x: &Tensor,
    train_y: &[usize],
    val_x: &Tensor,
    val_y: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.check_input(train_x)?;
    model.check_input(val_x)?;
    model.check_labels(train_y)?;
    model.check_labels(val_y)?;
    let n = train_x.shape()[0];
    if n != train_y.len() || val_x.shape()[0] != val_y.len() {
        return Err(Error::Validation("sample and label counts differ".into()));
    }
    if !train_x.all_finite() || !val_x.all_finite() {
        return Err(Error::Validation("training inputs contain non-finite values".into()));
    }
    if n < 2 {
        return Err(Error::Validation("training needs at least 2 samples".into()));
    }
    let classes = model.spec.n_classes;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(1);
    let mut adam = Adam::new(cfg.adam);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, f64, usize, ParamStore)> = None;

    for epoch in 1..=cfg.epochs {
        model.set_mode(Mode::Train);
        if cfg.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        let (mut loss_sum, mut hits) = (0.0, 0usize);
        for (b, idx) in batches(&order, cfg.batch_size).into_iter().enumerate() {
            let xb = train_x.gather_rows(idx)?;
            let yb: Vec<usize> = idx.iter().map(|&i| train_y[i]).collect();
            let mut tape = Tape::new();
            let mut ctx = ForwardCtx::train(&mut dropout_rng);
            let input = tape.constant(xb);
            let probs = match model.layer().forward(&model.store, &mut tape, input, &mut ctx) {
                Ok(p) => p,
                // inputs were checked finite, so a value error here is numeric blow-up
                Err(Error::Validation(_)) => {
                    return Err(Error::Divergence {
                        epoch,
                        batch: b + 1,
                        loss: f64::NAN,
                    })
                }
                Err(e) => return Err(e),
            };
            let loss = tape.cross_entropy(probs, &yb)?;
            let value = tape.value(loss)[0];
            if !value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    loss: value,
                });
            }
            let (_, h) = loss_and_hits(tape.value(probs), &yb, classes);
            hits += h;
            loss_sum += value * yb.len() as f64;
            let grads = tape.backward(loss)?;
            let updates = ctx.take_stat_updates();
            model.store.accumulate(&grads, &ctx)?;
            drop(ctx);
            model.store.apply_stat_updates(&updates);
            adam.step(&mut model.store.trainable_mut())?;
            if !params_finite(&model.store) {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    loss: value,
                });
            }
        }
        model.set_mode(Mode::Eval);
        let (val_loss, val_acc) = match evaluate_loss(model, val_x, val_y) {
            Err(Error::Validation(_)) => {
                return Err(Error::Divergence {
                    epoch,
                    batch: 0,
                    loss: f64::NAN,
                })
            }
            other => other?,
        };
        let record = EpochRecord {
            epoch,
            train_acc: hits as f64 / n as f64,
            train_loss: loss_sum / n as f64,
            val_acc,
            val_loss,
        };
        log::debug!(
            "{} epoch {epoch}: train acc {:.3} loss {:.4}, val acc {:.3} loss {:.4}",
            model.spec.kind.name(),
            record.train_acc,
            record.train_loss,
            val_acc,
            val_loss
        );
        history.records.push(record);
        let improved = match &best {
            None => true,
            Some((acc, loss, _, _)) => val_acc > *acc || (val_acc == *acc && val_loss < *loss),
        };
        if improved {
            best = Some((val_acc, val_loss, epoch, model.store.clone()));
        }
    }
    let (_, _, best_epoch, best) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        history,
        best_epoch,
        best,
    })
}
