//! Decision-level fusion of per-stream class probabilities and the
//! evaluation metrics (accuracy, macro precision/recall/F1, confusion).

mod metrics;
mod report;

pub use metrics::{evaluate, ClassMetrics, ConfusionMatrix, MetricsReport};
pub use report::{compare_streams, Comparison, StreamResult};
pub(crate) use report::format_table;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row sums may drift from 1 by at most this much.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMethod {
    Average,
    Max,
}

impl FusionMethod {
    pub fn label(self) -> &'static str {
        match self {
            FusionMethod::Average => "Fusion(avg)",
            FusionMethod::Max => "Fusion(max)",
        }
    }
}

/// Class probabilities for one sample, one row per stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || cols == 0 {
            return Err(Error::Validation("score matrix needs at least one stream and one class".into()));
        }
        for (j, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Validation(format!("stream {j} has {} classes, expected {cols}", row.len())));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Validation(format!("stream {j} has a probability outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Validation(format!("stream {j} probabilities sum to {sum}")));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn n_classes(&self) -> usize {
        self.rows[0].len()
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Class with the highest mean probability across streams.
pub fn fuse_average(scores: &ScoreMatrix) -> usize {
    let n = scores.rows.len() as f64;
    let means: Vec<f64> = (0..scores.n_classes())
        .map(|i| scores.rows.iter().map(|r| r[i]).sum::<f64>() / n)
        .collect();
    argmax(&means)
}

/// Class with the highest single-stream probability.
pub fn fuse_max(scores: &ScoreMatrix) -> usize {
    let maxima: Vec<f64> = (0..scores.n_classes())
        .map(|i| scores.rows.iter().map(|r| r[i]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    argmax(&maxima)
}

pub fn fuse(scores: &ScoreMatrix, method: FusionMethod) -> usize {
    match method {
        FusionMethod::Average => fuse_average(scores),
        FusionMethod::Max => fuse_max(scores),
    }
}

/// Fuses aligned `[N × C]` score tensors sample by sample.
pub fn fuse_streams(streams: &[&Tensor], method: FusionMethod) -> Result<Vec<usize>> {
    let first = streams
        .first()
        .ok_or_else(|| Error::Validation("no streams to fuse".into()))?;
    for s in streams {
        if s.rank() != 2 || s.shape() != first.shape() {
            return Err(Error::Alignment(format!(
                "score tensors {:?} are not aligned",
                streams.iter().map(|s| s.shape().to_vec()).collect::<Vec<_>>()
            )));
        }
    }
    let (n, c) = (first.shape()[0], first.shape()[1]);
    (0..n)
        .map(|k| {
            let rows = streams.iter().map(|s| s.data()[k * c..(k + 1) * c].to_vec()).collect();
            Ok(fuse(&ScoreMatrix::new(rows)?, method))
        })
        .collect()
}

/// Argmax of each row of an `[N × C]` score tensor.
pub fn predict_classes(scores: &Tensor) -> Vec<usize> {
    scores.rows().iter().map(|r| argmax(r)).collect()
}
