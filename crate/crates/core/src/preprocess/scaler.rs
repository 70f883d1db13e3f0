use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature extrema learned from training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalerParams {
    /// Learns per-feature min and max from `data`, a flat row-major buffer of
    /// rows `width` wide.
    pub fn fit(data: &[f64], width: usize) -> Result<Self> {
        if width == 0 || data.is_empty() || !data.len().is_multiple_of(width) {
            return Err(Error::Validation(format!(
                "cannot fit a scaler on {} values with {width} features",
                data.len()
            )));
        }
        let mut min = data[..width].to_vec();
        let mut max = min.clone();
        for row in data.chunks_exact(width) {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Validation(format!("non-finite value in feature {j}")));
                }
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn width(&self) -> usize {
        self.min.len()
    }

    /// `(x - min) / (max - min)`, with degenerate features mapped to 0.
    pub fn apply_in_place(&self, data: &mut [f64]) -> Result<()> {
        self.check(data)?;
        for row in data.chunks_exact_mut(self.width()) {
            for ((v, &lo), &hi) in row.iter_mut().zip(&self.min).zip(&self.max) {
                *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.0 };
            }
        }
        Ok(())
    }

    pub fn inverse_in_place(&self, data: &mut [f64]) -> Result<()> {
        self.check(data)?;
        for row in data.chunks_exact_mut(self.width()) {
            for ((v, &lo), &hi) in row.iter_mut().zip(&self.min).zip(&self.max) {
                *v = lo + *v * (hi - lo);
            }
        }
        Ok(())
    }

    fn check(&self, data: &[f64]) -> Result<()> {
        if !data.len().is_multiple_of(self.width()) {
            return Err(Error::Validation(format!(
                "{} values do not split into rows of {} features",
                data.len(),
                self.width()
            )));
        }
        Ok(())
    }
}

/// Min-max scaler that must be fit before use.
#[derive(Debug, Clone, Default)]
pub struct MinMaxScaler {
    params: Option<ScalerParams>,
}

impl MinMaxScaler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fit(&mut self, data: &[f64], width: usize) -> Result<&ScalerParams> {
        Ok(self.params.insert(ScalerParams::fit(data, width)?))
    }

    pub fn params(&self) -> Option<&ScalerParams> {
        self.params.as_ref()
    }

    pub fn apply(&self, data: &[f64]) -> Result<Vec<f64>> {
        let params = self
            .params
            .as_ref()
            .ok_or_else(|| Error::State("min-max scaler applied before fit".into()))?;
        let mut out = data.to_vec();
        params.apply_in_place(&mut out)?;
        Ok(out)
    }
}
