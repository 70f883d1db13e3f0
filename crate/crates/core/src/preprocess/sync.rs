use super::keypoints::JOINTS;
use crate::error::{Error, Result};

/// How rows of a series are interpolated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    /// Every channel interpolated independently.
    Plain,
    /// Rows are 25 × (x, y, confidence); a joint with zero confidence at
    /// either neighbour comes out as all zeros.
    Keypoints,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub kind: SeriesKind,
    pub timestamps: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(kind: SeriesKind, timestamps: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if timestamps.len() != rows.len() {
            return Err(Error::Validation(format!(
                "{} timestamps for {} rows",
                timestamps.len(),
                rows.len()
            )));
        }
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Validation("rows differ in width".into()));
        }
        if kind == SeriesKind::Keypoints && width != 3 * JOINTS {
            return Err(Error::Validation(format!("keypoint rows need {} values, got {width}", 3 * JOINTS)));
        }
        if let Some(i) = timestamps.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Validation(format!("timestamps not strictly increasing at row {}", i + 1)));
        }
        Ok(Self { kind, timestamps, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Average sampling rate of a series in Hz.
pub fn native_rate(series: &TimeSeries) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::Sync(format!("a stream needs at least 2 samples, got {}", series.len())));
    }
    let span = series.timestamps[series.len() - 1] - series.timestamps[0];
    Ok((series.len() - 1) as f64 / span)
}

/// Two grid points closer than this are treated as the same instant.
const SNAP: f64 = 1e-9;

fn interpolate(series: &TimeSeries, t: f64, cursor: &mut usize) -> Vec<f64> {
    let ts = &series.timestamps;
    while *cursor + 1 < ts.len() && ts[*cursor + 1] <= t + SNAP {
        *cursor += 1;
    }
    let i = *cursor;
    if (t - ts[i]).abs() <= SNAP || i + 1 == ts.len() {
        return series.rows[i].clone();
    }
    let w = (t - ts[i]) / (ts[i + 1] - ts[i]);
    let (a, b) = (&series.rows[i], &series.rows[i + 1]);
    let mut out: Vec<f64> = a.iter().zip(b).map(|(p, q)| p + w * (q - p)).collect();
    if series.kind == SeriesKind::Keypoints {
        for j in 0..JOINTS {
            if a[3 * j + 2] == 0.0 || b[3 * j + 2] == 0.0 {
                out[3 * j..3 * j + 3].fill(0.0);
            }
        }
    }
    out
}

/// Resamples every stream onto one grid at `target_hz`, spanning the latest
/// common start to the earliest common end, by linear interpolation.
pub fn resample_to_common_rate(streams: &[TimeSeries], target_hz: f64) -> Result<Vec<TimeSeries>> {
    if streams.is_empty() {
        return Ok(Vec::new());
    }
    if !(target_hz > 0.0 && target_hz.is_finite()) {
        return Err(Error::Config(format!("target rate {target_hz} Hz must be positive")));
    }
    for (k, s) in streams.iter().enumerate() {
        let rate = native_rate(s)?;
        if target_hz > rate * (1.0 + 1e-6) {
            return Err(Error::Config(format!(
                "target rate {target_hz} Hz exceeds stream {k}'s native rate {rate:.6} Hz"
            )));
        }
    }
    let start = streams.iter().map(|s| s.timestamps[0]).fold(f64::NEG_INFINITY, f64::max);
    let end = streams
        .iter()
        .map(|s| s.timestamps[s.len() - 1])
        .fold(f64::INFINITY, f64::min);
    if end < start {
        return Err(Error::Sync(format!("streams do not overlap (latest start {start}, earliest end {end})")));
    }
    let n = ((end - start) * target_hz + SNAP).floor() as usize + 1;
    let grid: Vec<f64> = (0..n).map(|k| start + k as f64 / target_hz).collect();
    Ok(streams
        .iter()
        .map(|s| {
            let mut cursor = 0;
            TimeSeries {
                kind: s.kind,
                timestamps: grid.clone(),
                rows: grid.iter().map(|&t| interpolate(s, t, &mut cursor)).collect(),
            }
        })
        .collect())
}
