use serde::{Deserialize, Serialize};

use super::keypoints::{normalize_sequence, InertialSample, Joint, KeypointFrame, JOINTS};
use super::scaler::ScalerParams;
use super::split::{split_dataset, SplitIndices, SplitSpec};
use super::sync::{native_rate, resample_to_common_rate, SeriesKind, TimeSeries};
use super::tracker::{select_subject, TrackerState};
use super::window::{sliding_windows, WindowSpec};
use super::POSE_FEATURES;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One labelled recording: candidate persons per video frame plus the
/// inertial readings over the same activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSequence {
    pub id: String,
    pub class_id: usize,
    /// Every entry holds the persons detected at one timestamp.
    pub pose: Vec<Vec<KeypointFrame>>,
    pub inertial: Vec<InertialSample>,
}

/// Aligned windows of both streams, one label per window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    /// `[N × T × 50]`
    pub vision: Tensor,
    /// `[N × T × C]`
    pub inertial: Tensor,
    pub labels: Vec<usize>,
    pub sequence_ids: Vec<String>,
    pub rate_hz: f64,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.vision.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.inertial.shape()[2]
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Validation("empty dataset subset".into()));
        }
        Ok(Self {
            vision: self.vision.gather_rows(indices)?,
            inertial: self.inertial.gather_rows(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            sequence_ids: indices.iter().map(|&i| self.sequence_ids[i].clone()).collect(),
            rate_hz: self.rate_hz,
        })
    }
}

fn pose_series(frames: &[KeypointFrame]) -> Result<TimeSeries> {
    TimeSeries::new(
        SeriesKind::Keypoints,
        frames.iter().map(|f| f.timestamp).collect(),
        frames
            .iter()
            .map(|f| f.joints.iter().flat_map(|j| [j.x, j.y, j.c]).collect())
            .collect(),
    )
}

fn inertial_series(samples: &[InertialSample]) -> Result<TimeSeries> {
    TimeSeries::new(
        SeriesKind::Plain,
        samples.iter().map(|s| s.timestamp).collect(),
        samples.iter().map(|s| s.channels.clone()).collect(),
    )
}

fn track(seq: &LabeledSequence, frame_size: (f64, f64)) -> Result<Vec<KeypointFrame>> {
    let mut tracker = TrackerState::new(frame_size.0, frame_size.1);
    seq.pose
        .iter()
        .map(|candidates| Ok(candidates[select_subject(candidates, &mut tracker)?].clone()))
        .collect()
}

/// Runs subject selection, resampling to a common rate, keypoint
/// normalization and sliding-window segmentation over every sequence.
/// `target_hz` defaults to the lowest native rate seen in any stream.
/// Sequences without a usable pose or shorter than one window are skipped.
pub fn build_windows(
    sequences: &[LabeledSequence],
    spec: WindowSpec,
    target_hz: Option<f64>,
    frame_size: (f64, f64),
) -> Result<WindowedDataset> {
    let mut prepared = Vec::with_capacity(sequences.len());
    for seq in sequences {
        let pose = pose_series(&track(seq, frame_size)?)?;
        let inertial = inertial_series(&seq.inertial)?;
        prepared.push((seq, pose, inertial));
    }
    let target = match target_hz {
        Some(t) => t,
        None => {
            let mut lowest = f64::INFINITY;
            for (_, p, i) in &prepared {
                lowest = lowest.min(native_rate(p)?).min(native_rate(i)?);
            }
            lowest
        }
    };
    let channels = prepared.first().map_or(0, |(_, _, i)| i.rows[0].len());
    let (mut vision, mut inertial, mut labels, mut ids) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (seq, pose, imu) in prepared {
        if imu.rows[0].len() != channels {
            return Err(Error::Validation(format!(
                "sequence {} has {} inertial channels, expected {channels}",
                seq.id,
                imu.rows[0].len()
            )));
        }
        let synced = resample_to_common_rate(&[pose, imu], target)?;
        let frames: Vec<KeypointFrame> = synced[0]
            .timestamps
            .iter()
            .zip(&synced[0].rows)
            .map(|(&t, row)| KeypointFrame {
                timestamp: t,
                joints: (0..JOINTS).map(|j| Joint::new(row[3 * j], row[3 * j + 1], row[3 * j + 2])).collect(),
            })
            .collect();
        let features = match normalize_sequence(&frames) {
            Ok(f) => f,
            Err(e) => {
                log::warn!("sequence {} skipped: {e}", seq.id);
                continue;
            }
        };
        for start in sliding_windows(features.len(), spec) {
            let end = start + spec.window_len;
            features[start..end].iter().for_each(|r| vision.extend_from_slice(r));
            synced[1].rows[start..end].iter().for_each(|r| inertial.extend_from_slice(r));
            labels.push(seq.class_id);
            ids.push(seq.id.clone());
        }
    }
    if labels.is_empty() {
        return Err(Error::Validation("no sequence produced a full window".into()));
    }
    let n = labels.len();
    Ok(WindowedDataset {
        vision: Tensor::new(vec![n, spec.window_len, POSE_FEATURES], vision)?,
        inertial: Tensor::new(vec![n, spec.window_len, channels], inertial)?,
        labels,
        sequence_ids: ids,
        rate_hz: target,
    })
}

/// Split windows with both streams min-max scaled by training statistics.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub test: WindowedDataset,
    pub indices: SplitIndices,
    pub vision_scaler: ScalerParams,
    pub inertial_scaler: ScalerParams,
}

/// Splits `data` and scales every partition with extrema from the training
/// partition only.
pub fn prepare_splits(data: &WindowedDataset, n_classes: usize, spec: &SplitSpec) -> Result<PreparedData> {
    let indices = split_dataset(&data.labels, n_classes, spec)?;
    let mut train = data.subset(&indices.train)?;
    let mut val = data.subset(&indices.val)?;
    let mut test = data.subset(&indices.test)?;
    let vision_scaler = ScalerParams::fit(train.vision.data(), POSE_FEATURES)?;
    let inertial_scaler = ScalerParams::fit(train.inertial.data(), data.channels())?;
    for part in [&mut train, &mut val, &mut test] {
        vision_scaler.apply_in_place(part.vision.data_mut())?;
        inertial_scaler.apply_in_place(part.inertial.data_mut())?;
    }
    Ok(PreparedData {
        train,
        val,
        test,
        indices,
        vision_scaler,
        inertial_scaler,
    })
}
