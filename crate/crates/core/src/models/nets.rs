use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, BatchNorm, Conv1d, Dense, Dropout, ForwardCtx, GlobalAvgPool, Layer, Lstm, Mode, ParamStore, TimeDistributed};
use crate::preprocess::POSE_FEATURES;
use crate::tensor::{load_checkpoint, Tape, Tensor, Var};

pub const DROPOUT_RATE: f64 = 0.4;
const CONV_FILTERS: usize = 16;
const CONV_KERNEL: usize = 3;
const VISION_UNITS: usize = 20;
const INERTIAL_UNITS: [usize; 3] = [256, 128, 64];
/// Samples per forward pass when scoring.
const PREDICT_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamKind {
    Vision,
    Inertial,
}

impl StreamKind {
    pub fn name(self) -> &'static str {
        match self {
            StreamKind::Vision => "vision",
            StreamKind::Inertial => "inertial",
        }
    }
}

/// Everything needed to rebuild a model's layer graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: StreamKind,
    pub n_classes: usize,
    pub window_len: usize,
    /// Features per timestep: 50 for vision, the sensor channel count for
    /// inertial.
    pub features: usize,
    pub init_seed: u64,
}

/// Per-frame conv over the 50 keypoint coordinates, batch norm, dropout,
/// pooling over the coordinate axis, a 20-unit LSTM and a softmax head.
#[derive(Debug, Clone)]
pub struct VisionStreamNet {
    pub conv: TimeDistributed<Conv1d>,
    pub norm: BatchNorm,
    pub dropout: Dropout,
    pub pool: GlobalAvgPool,
    pub lstm: Lstm,
    pub head: Dense,
}

impl Layer for VisionStreamNet {
    fn forward(&self, store: &ParamStore, tape: &mut Tape, x: Var, ctx: &mut ForwardCtx<'_>) -> Result<Var> {
        let s = tape.shape(x).to_vec();
        // one input channel per frame: [B, T, 1, 50]
        let h = tape.reshape(x, &[s[0], s[1], 1, s[2]])?;
        let h = self.conv.forward(store, tape, h, ctx)?;
        let h = self.norm.forward(store, tape, h, ctx)?;
        let h = self.dropout.forward(store, tape, h, ctx)?;
        let h = self.pool.forward(store, tape, h, ctx)?;
        let h = self.lstm.forward(store, tape, h, ctx)?;
        self.head.forward(store, tape, h, ctx)
    }
}

/// Three stacked LSTMs (256, 128, 64) with batch norm and dropout between
/// them, then a softmax head.
#[derive(Debug, Clone)]
pub struct InertialStreamNet {
    pub lstm1: Lstm,
    pub norm1: BatchNorm,
    pub lstm2: Lstm,
    pub norm2: BatchNorm,
    pub lstm3: Lstm,
    pub dropout: Dropout,
    pub head: Dense,
}

impl Layer for InertialStreamNet {
    fn forward(&self, store: &ParamStore, tape: &mut Tape, x: Var, ctx: &mut ForwardCtx<'_>) -> Result<Var> {
        let h = self.lstm1.forward(store, tape, x, ctx)?;
        let h = self.norm1.forward(store, tape, h, ctx)?;
        let h = self.dropout.forward(store, tape, h, ctx)?;
        let h = self.lstm2.forward(store, tape, h, ctx)?;
        let h = self.norm2.forward(store, tape, h, ctx)?;
        let h = self.dropout.forward(store, tape, h, ctx)?;
        let h = self.lstm3.forward(store, tape, h, ctx)?;
        self.head.forward(store, tape, h, ctx)
    }
}

#[derive(Debug, Clone)]
enum Net {
    Vision(VisionStreamNet),
    Inertial(InertialStreamNet),
}

/// A stream classifier: layer graph, parameters and current mode.
#[derive(Debug, Clone)]
pub struct StreamModel {
    pub spec: ModelSpec,
    pub store: ParamStore,
    net: Net,
    mode: Mode,
}

fn check_classes(n_classes: usize) -> Result<()> {
    if n_classes < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {n_classes}")));
    }
    Ok(())
}

/// Vision stream for windows of `window_len` frames. Built in train mode.
pub fn build_vision_net(n_classes: usize, window_len: usize, seed: u64) -> Result<StreamModel> {
    StreamModel::build(ModelSpec {
        kind: StreamKind::Vision,
        n_classes,
        window_len,
        features: POSE_FEATURES,
        init_seed: seed,
    })
}

/// Inertial stream over `channels` sensor channels. Built in train mode.
pub fn build_inertial_net(n_classes: usize, window_len: usize, channels: usize, seed: u64) -> Result<StreamModel> {
    StreamModel::build(ModelSpec {
        kind: StreamKind::Inertial,
        n_classes,
        window_len,
        features: channels,
        init_seed: seed,
    })
}

impl StreamModel {
    pub fn build(spec: ModelSpec) -> Result<Self> {
        check_classes(spec.n_classes)?;
        if spec.window_len == 0 || spec.features == 0 {
            return Err(Error::Config("window length and feature count must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
        let mut store = ParamStore::new();
        let net = match spec.kind {
            StreamKind::Vision => {
                if spec.window_len < CONV_KERNEL {
                    return Err(Error::Config(format!(
                        "vision windows need at least {CONV_KERNEL} frames, got {}",
                        spec.window_len
                    )));
                }
                if spec.features != POSE_FEATURES {
                    return Err(Error::Config(format!(
                        "vision stream takes {POSE_FEATURES} features per frame, got {}",
                        spec.features
                    )));
                }
                let conv = Conv1d::new(&mut store, &mut rng, "conv", 1, CONV_FILTERS, CONV_KERNEL)?;
                Net::Vision(VisionStreamNet {
                    conv: TimeDistributed::new(conv),
                    norm: BatchNorm::new(&mut store, "conv_norm", CONV_FILTERS, 2),
                    dropout: Dropout::new(DROPOUT_RATE)?,
                    pool: GlobalAvgPool,
                    lstm: Lstm::new(&mut store, &mut rng, "lstm", CONV_FILTERS, VISION_UNITS, false)?,
                    head: Dense::new(&mut store, &mut rng, "head", VISION_UNITS, spec.n_classes, Activation::Softmax)?,
                })
            }
            StreamKind::Inertial => {
                let [u1, u2, u3] = INERTIAL_UNITS;
                Net::Inertial(InertialStreamNet {
                    lstm1: Lstm::new(&mut store, &mut rng, "lstm1", spec.features, u1, true)?,
                    norm1: BatchNorm::new(&mut store, "norm1", u1, 2),
                    lstm2: Lstm::new(&mut store, &mut rng, "lstm2", u1, u2, true)?,
                    norm2: BatchNorm::new(&mut store, "norm2", u2, 2),
                    lstm3: Lstm::new(&mut store, &mut rng, "lstm3", u2, u3, false)?,
                    dropout: Dropout::new(DROPOUT_RATE)?,
                    head: Dense::new(&mut store, &mut rng, "head", u3, spec.n_classes, Activation::Softmax)?,
                })
            }
        };
        Ok(Self {
            spec,
            store,
            net,
            mode: Mode::Train,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn layer(&self) -> &dyn Layer {
        match &self.net {
            Net::Vision(n) => n,
            Net::Inertial(n) => n,
        }
    }

    /// The vision layer graph, when this is a vision model.
    pub fn vision(&self) -> Option<&VisionStreamNet> {
        match &self.net {
            Net::Vision(n) => Some(n),
            Net::Inertial(_) => None,
        }
    }

    pub fn inertial(&self) -> Option<&InertialStreamNet> {
        match &self.net {
            Net::Inertial(n) => Some(n),
            Net::Vision(_) => None,
        }
    }

    pub fn check_input(&self, x: &Tensor) -> Result<()> {
        let want = [self.spec.window_len, self.spec.features];
        if x.rank() != 3 || x.shape()[1..] != want {
            return Err(Error::dim(
                "model input",
                &[x.shape()],
                format!("{} stream expects [batch x {} x {}]", self.spec.kind.name(), want[0], want[1]),
            ));
        }
        Ok(())
    }

    pub fn check_labels(&self, labels: &[usize]) -> Result<()> {
        match labels.iter().find(|&&l| l >= self.spec.n_classes) {
            Some(l) => Err(Error::Validation(format!(
                "label {l} out of range for {} classes",
                self.spec.n_classes
            ))),
            None => Ok(()),
        }
    }

    /// Class probabilities `[N × n_classes]` in eval mode. Samples are scored
    /// independently, so the result does not depend on chunking.
    pub fn predict_scores(&self, x: &Tensor) -> Result<Tensor> {
        if self.mode != Mode::Eval {
            return Err(Error::Mode("predict_scores needs an eval-mode model".into()));
        }
        self.check_input(x)?;
        let n = x.shape()[0];
        let mut out = Vec::with_capacity(n * self.spec.n_classes);
        for start in (0..n).step_by(PREDICT_CHUNK) {
            let idx: Vec<usize> = (start..(start + PREDICT_CHUNK).min(n)).collect();
            let chunk = x.gather_rows(&idx)?;
            let mut tape = Tape::new();
            let mut ctx = ForwardCtx::eval();
            let input = tape.constant(chunk);
            let probs = self.layer().forward(&self.store, &mut tape, input, &mut ctx)?;
            out.extend_from_slice(tape.value(probs));
        }
        Tensor::new(vec![n, self.spec.n_classes], out)
    }

    /// Writes parameters and running statistics with the model spec (plus
    /// `extra`) as metadata.
    pub fn save(&self, path: &Path, extra: serde_json::Value) -> Result<()> {
        let meta = serde_json::json!({ "model": self.spec, "extra": extra });
        self.store.save(path, meta)
    }

    /// Rebuilds a model from a checkpoint, in eval mode.
    pub fn load(path: &Path) -> Result<Self> {
        let ck = load_checkpoint(path)?;
        let spec: ModelSpec = serde_json::from_value(
            ck.metadata
                .get("model")
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("{} carries no model spec", path.display())))?,
        )?;
        let mut model = Self::build(spec)?;
        model.store.load_values(&ck)?;
        model.mode = Mode::Eval;
        Ok(model)
    }
}
