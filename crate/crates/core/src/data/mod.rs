//! Dataset manifests, CSV ingestion and the synthetic two-modality generator.

mod csv_io;
mod manifest;
mod synth;

pub use csv_io::{
    keypoint_header, read_inertial, read_keypoints, read_labels, write_inertial, write_keypoints, write_labels,
    InertialTable, LabelRecord,
};
pub use manifest::{load_dataset, write_dataset, DatasetManifest, LoadSummary, LoadedDataset};
pub use synth::{
    generate_synthetic, AmbiguousPair, ClassTemplate, HiddenTemplate, Modality, Motion, Nuisance, Sinusoid,
    SyntheticConfig, SyntheticGenerator, VisibleTemplate, FRAME_SIZE, GRAVITY, INERTIAL_CHANNELS, METRES_PER_PIXEL,
    SENSOR_JOINT,
};
