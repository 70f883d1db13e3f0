use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Window length and the number of samples shared by consecutive windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window_len: usize,
    pub overlap: usize,
}

impl WindowSpec {
    pub fn new(window_len: usize, overlap: usize) -> Result<Self> {
        if window_len == 0 || overlap >= window_len {
            return Err(Error::Config(format!(
                "window spec needs 0 <= overlap < window_len, got ({window_len}, {overlap})"
            )));
        }
        Ok(Self { window_len, overlap })
    }

    pub fn stride(&self) -> usize {
        self.window_len - self.overlap
    }

    /// Named presets: upfall (50, 30), utd (50, 10), berkeley (50, 10),
    /// cmhad (20, 10).
    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "upfall" => Self::new(50, 30),
            "utd" | "berkeley" => Self::new(50, 10),
            "cmhad" => Self::new(20, 10),
            other => Err(Error::Config(format!(
                "unknown window profile {other:?} (expected upfall, utd, berkeley or cmhad)"
            ))),
        }
    }

    pub const PROFILES: [&'static str; 4] = ["upfall", "utd", "berkeley", "cmhad"];
}

pub fn window_count(n: usize, spec: WindowSpec) -> usize {
    if n < spec.window_len {
        0
    } else {
        (n - spec.window_len) / spec.stride() + 1
    }
}

/// Start offsets of every full window in a series of length `n`. A series
/// shorter than one window yields none.
pub fn sliding_windows(n: usize, spec: WindowSpec) -> Vec<usize> {
    if n < spec.window_len {
        log::warn!("sequence of {n} samples is shorter than the {}-sample window; skipped", spec.window_len);
    }
    (0..window_count(n, spec)).map(|k| k * spec.stride()).collect()
}
