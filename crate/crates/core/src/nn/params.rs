use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{load_checkpoint, save_checkpoint, Checkpoint, Gradients, Tensor};

use super::ForwardCtx;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub(crate) fn new(i: usize) -> Self {
        Self(i)
    }

    pub fn index(self) -> usize {
        self.0
    }
}

/// Batch statistics to fold into a batch-norm layer's running averages.
#[derive(Debug, Clone)]
pub struct StatUpdate {
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Named tensors of one model, trainable (`requires_grad`) or not (running
/// statistics). Names are hierarchical, e.g. `vision/conv1/kernel`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter name {name}");
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.tensors.iter().filter(|t| t.requires_grad()).map(Tensor::len).sum()
    }

    /// Mutable references to the trainable tensors, in store order.
    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        self.tensors.iter_mut().filter(|t| t.requires_grad()).collect()
    }

    /// Adds the gradients of every bound trainable parameter into its slot;
    /// trainable parameters the pass did not touch get zeros.
    pub fn accumulate(&mut self, grads: &Gradients, ctx: &ForwardCtx<'_>) -> Result<()> {
        let bound: Vec<_> = ctx.bound().collect();
        for t in self.tensors.iter_mut().filter(|t| t.requires_grad()) {
            t.accumulate_grad(&vec![0.0; t.len()])?;
        }
        for (id, var) in bound {
            let t = &mut self.tensors[id.0];
            if t.requires_grad() {
                grads.accumulate_into(var, t)?;
            }
        }
        Ok(())
    }

    pub fn apply_stat_updates(&mut self, updates: &[StatUpdate]) {
        for u in updates {
            let m = 1.0 - u.momentum;
            for (r, b) in self.tensors[u.running_mean.0].data_mut().iter_mut().zip(&u.mean) {
                *r = u.momentum * *r + m * b;
            }
            for (r, b) in self.tensors[u.running_var.0].data_mut().iter_mut().zip(&u.var) {
                *r = u.momentum * *r + m * b;
            }
        }
    }

    pub fn save(&self, path: &Path, metadata: serde_json::Value) -> Result<()> {
        let entries: Vec<(&str, &Tensor)> = self.names.iter().map(String::as_str).zip(&self.tensors).collect();
        save_checkpoint(path, &entries, metadata)
    }

    /// Overwrites every tensor from a checkpoint; names and shapes must match
    /// exactly.
    pub fn load_values(&mut self, ck: &Checkpoint) -> Result<()> {
        if ck.tensors.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                ck.tensors.len(),
                self.tensors.len()
            )));
        }
        for ((name, slot), (ck_name, t)) in self.names.iter().zip(&mut self.tensors).zip(&ck.tensors) {
            if name != ck_name || slot.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "expected {name} {:?}, found {ck_name} {:?}",
                    slot.shape(),
                    t.shape()
                )));
            }
            *slot = t.clone();
        }
        Ok(())
    }

    pub fn load(&mut self, path: &Path) -> Result<serde_json::Value> {
        let ck = load_checkpoint(path)?;
        self.load_values(&ck)?;
        Ok(ck.metadata)
    }
}
