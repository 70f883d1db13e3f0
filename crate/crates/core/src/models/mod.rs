//! The two stream classifiers and their training loop.

mod history;
mod nets;
mod train;

pub use history::{EpochRecord, TrainHistory};
pub use nets::{build_inertial_net, build_vision_net, InertialStreamNet, ModelSpec, StreamKind, StreamModel, VisionStreamNet};
pub use train::{train, TrainConfig, TrainOutcome};
