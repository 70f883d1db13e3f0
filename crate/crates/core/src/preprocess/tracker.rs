use serde::{Deserialize, Serialize};

use super::keypoints::KeypointFrame;
use crate::error::{Error, Result};

/// Subject-of-interest tracker for frames with several people.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    /// Side of the central detection region as a fraction of the frame.
    pub center_region: f64,
    pub frame_width: f64,
    pub frame_height: f64,
    pub last_keypoints: Option<KeypointFrame>,
    pub locked: bool,
}

impl TrackerState {
    pub fn new(frame_width: f64, frame_height: f64) -> Self {
        Self {
            center_region: 0.5,
            frame_width,
            frame_height,
            last_keypoints: None,
            locked: false,
        }
    }

    fn in_center(&self, (x, y): (f64, f64)) -> bool {
        let half = self.center_region / 2.0;
        let rx = (x / self.frame_width - 0.5).abs();
        let ry = (y / self.frame_height - 0.5).abs();
        rx <= half && ry <= half
    }
}

fn most_confident(candidates: &[KeypointFrame], among: impl Iterator<Item = usize>) -> Option<usize> {
    among.fold(None, |best: Option<usize>, i| match best {
        Some(b) if candidates[b].mean_confidence() >= candidates[i].mean_confidence() => Some(b),
        _ => Some(i),
    })
}

/// Mean distance over joints confident in both frames, or the centroid
/// distance when they share none.
fn pose_distance(a: &KeypointFrame, b: &KeypointFrame) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, q) in a.joints.iter().zip(&b.joints) {
        if p.confident() && q.confident() {
            sum += (p.x - q.x).hypot(p.y - q.y);
            n += 1;
        }
    }
    if n > 0 {
        return sum / n as f64;
    }
    match (a.centroid(), b.centroid()) {
        (Some(p), Some(q)) => (p.0 - q.0).hypot(p.1 - q.1),
        _ => f64::INFINITY,
    }
}

/// Picks the subject among `candidates` and updates the tracker. Before
/// locking, the most confident person whose centroid lies in the central
/// region is taken and the tracker locks; with nobody there the most
/// confident person is used without locking. Once locked, the person closest
/// to the previous pick is taken. Ties go to the lower index.
pub fn select_subject(candidates: &[KeypointFrame], state: &mut TrackerState) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::Validation("no candidate persons in frame".into()));
    }
    let chosen = match (&state.last_keypoints, state.locked) {
        (Some(last), true) => {
            let mut best = (f64::INFINITY, None);
            for (i, c) in candidates.iter().enumerate() {
                let d = pose_distance(c, last);
                if d < best.0 {
                    best = (d, Some(i));
                }
            }
            best.1
                .or_else(|| most_confident(candidates, 0..candidates.len()))
                .expect("non-empty")
        }
        _ => {
            let centered = (0..candidates.len()).filter(|&i| candidates[i].centroid().is_some_and(|c| state.in_center(c)));
            match most_confident(candidates, centered) {
                Some(i) => {
                    state.locked = true;
                    i
                }
                None => most_confident(candidates, 0..candidates.len()).expect("non-empty"),
            }
        }
    };
    state.last_keypoints = Some(candidates[chosen].clone());
    Ok(chosen)
}
