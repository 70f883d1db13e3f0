//! Two-stream human activity recognition: a pose-keypoint stream and an
//! inertial stream, each an independent classifier, fused at the decision
//! level from their softmax scores.

pub mod cli;
pub mod data;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod models;
pub mod nn;
pub(crate) mod plot;
pub mod preprocess;
pub mod tensor;

pub use error::{Error, Result};
