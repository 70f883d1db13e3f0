//! Stream synchronization, keypoint normalization, subject tracking,
//! min-max scaling, sliding windows and dataset splitting.

mod dataset;
mod keypoints;
mod scaler;
mod split;
mod sync;
mod tracker;
mod window;

pub use dataset::{build_windows, prepare_splits, LabeledSequence, PreparedData, WindowedDataset};
pub use keypoints::{normalize_keypoints, normalize_sequence, InertialSample, Joint, KeypointFrame, JOINTS, MID_HIP, NECK};
pub use scaler::{MinMaxScaler, ScalerParams};
pub use split::{split_dataset, SplitIndices, SplitSpec};
pub use sync::{native_rate, resample_to_common_rate, SeriesKind, TimeSeries};
pub use tracker::{select_subject, TrackerState};
pub use window::{sliding_windows, window_count, WindowSpec};

/// Model features per frame on the vision stream: (x, y) for every joint.
pub const POSE_FEATURES: usize = 2 * JOINTS;

#[cfg(test)]
mod tests;
