use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const JOINTS: usize = 25;
pub const NECK: usize = 1;
pub const MID_HIP: usize = 8;

/// One joint in pixel coordinates. Undetected joints are all zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub x: f64,
    pub y: f64,
    pub c: f64,
}

impl Joint {
    pub fn new(x: f64, y: f64, c: f64) -> Self {
        Self { x, y, c }
    }

    pub fn confident(&self) -> bool {
        self.c > 0.0
    }
}

/// The 25 joints of one person in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointFrame {
    pub timestamp: f64,
    pub joints: Vec<Joint>,
}

impl KeypointFrame {
    pub fn new(timestamp: f64, joints: Vec<Joint>) -> Result<Self> {
        if joints.len() != JOINTS {
            return Err(Error::Validation(format!("expected {JOINTS} joints, got {}", joints.len())));
        }
        if let Some((i, j)) = joints.iter().enumerate().find(|(_, j)| !(0.0..=1.0).contains(&j.c)) {
            return Err(Error::Validation(format!("joint {i} confidence {} outside [0, 1]", j.c)));
        }
        Ok(Self { timestamp, joints })
    }

    pub fn confident_joints(&self) -> impl Iterator<Item = &Joint> {
        self.joints.iter().filter(|j| j.confident())
    }

    /// Mean position of the confident joints.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for j in self.confident_joints() {
            sx += j.x;
            sy += j.y;
            n += 1;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    pub fn mean_confidence(&self) -> f64 {
        self.joints.iter().map(|j| j.c).sum::<f64>() / self.joints.len() as f64
    }
}

/// One multi-channel inertial reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InertialSample {
    pub timestamp: f64,
    pub channels: Vec<f64>,
}

/// Translates the frame to the neck and divides by the neck to mid-hip
/// distance, returning (x, y) for all joints. Missing reference joints fall
/// back to the bounding box of the confident joints (center as origin,
/// diagonal as scale). Returns `None` when fewer than two joints are
/// confident or the scale is zero.
pub fn normalize_keypoints(frame: &KeypointFrame) -> Option<Vec<f64>> {
    let confident: Vec<&Joint> = frame.confident_joints().collect();
    if confident.len() < 2 {
        return None;
    }
    let neck = frame.joints[NECK];
    let hip = frame.joints[MID_HIP];
    let (lo_x, hi_x, lo_y, hi_y) = confident.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), j| (a.min(j.x), b.max(j.x), c.min(j.y), d.max(j.y)),
    );
    let origin = if neck.confident() {
        (neck.x, neck.y)
    } else {
        ((lo_x + hi_x) / 2.0, (lo_y + hi_y) / 2.0)
    };
    let scale = if neck.confident() && hip.confident() {
        (neck.x - hip.x).hypot(neck.y - hip.y)
    } else {
        (hi_x - lo_x).hypot(hi_y - lo_y)
    };
    if !(scale > 0.0) {
        return None;
    }
    let mut out = Vec::with_capacity(2 * JOINTS);
    for j in &frame.joints {
        if j.confident() {
            out.push((j.x - origin.0) / scale);
            out.push((j.y - origin.1) / scale);
        } else {
            out.extend([0.0, 0.0]);
        }
    }
    Some(out)
}

/// Normalizes every frame, replacing invalid frames with the previous valid
/// one (or the first valid one for a leading run).
pub fn normalize_sequence(frames: &[KeypointFrame]) -> Result<Vec<Vec<f64>>> {
    let normalized: Vec<Option<Vec<f64>>> = frames.iter().map(normalize_keypoints).collect();
    let first = normalized
        .iter()
        .flatten()
        .next()
        .cloned()
        .ok_or_else(|| Error::Validation("no frame has two or more confident joints".into()))?;
    let mut last = first;
    Ok(normalized
        .into_iter()
        .map(|n| {
            if let Some(v) = n {
                last = v;
            }
            last.clone()
        })
        .collect())
}
