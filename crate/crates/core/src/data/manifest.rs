use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::csv_io::{read_inertial, read_keypoints, read_labels, write_inertial, write_keypoints, write_labels, LabelRecord};
use crate::error::{Error, Result};
use crate::preprocess::{InertialSample, KeypointFrame, LabeledSequence, WindowSpec};

fn default_frame_size() -> (f64, f64) {
    (640.0, 480.0)
}

/// Describes a recorded dataset on disk. Files of the three kinds are paired
/// by file stem: `s01_t02.csv` under the keypoint, inertial and label globs
/// form one recording. Globs are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub classes: Vec<String>,
    pub keypoint_glob: String,
    pub inertial_glob: String,
    pub label_glob: String,
    pub keypoint_rate_hz: f64,
    pub inertial_rate_hz: f64,
    pub window_profile: String,
    /// Inertial columns to use, in model order.
    pub channels: Vec<String>,
    #[serde(default = "default_frame_size")]
    pub frame_size: (f64, f64),
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Config("manifest needs at least two classes".into()));
        }
        for (name, r) in [("keypoint", self.keypoint_rate_hz), ("inertial", self.inertial_rate_hz)] {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::Config(format!("{name} rate must be positive, got {r}")));
            }
        }
        if self.channels.is_empty() {
            return Err(Error::Config("manifest lists no inertial channels".into()));
        }
        let (w, h) = self.frame_size;
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::Config(format!("frame size must be positive, got {w}x{h}")));
        }
        self.window_spec().map(|_| ())
    }

    pub fn window_spec(&self) -> Result<WindowSpec> {
        WindowSpec::profile(&self.window_profile)
    }

    /// Common rate both streams are brought down to.
    pub fn target_rate(&self) -> f64 {
        self.keypoint_rate_hz.min(self.inertial_rate_hz)
    }

    fn files(&self, pattern: &str) -> Result<BTreeMap<String, PathBuf>> {
        let full = self.base_dir.join(pattern);
        let paths = glob::glob(&full.to_string_lossy()).map_err(|e| Error::Config(format!("bad glob {pattern:?}: {e}")))?;
        let mut out = BTreeMap::new();
        for p in paths {
            let p = p.map_err(|e| Error::io(e.path().to_path_buf(), e.into()))?;
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            if let Some(prev) = out.insert(stem.clone(), p.clone()) {
                return Err(Error::Config(format!(
                    "recording {stem:?} matched twice: {} and {}",
                    prev.display(),
                    p.display()
                )));
            }
        }
        Ok(out)
    }
}

/// Per-stream file and sequence counts from one load.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadSummary {
    pub keypoint_files: usize,
    pub inertial_files: usize,
    pub label_files: usize,
    pub sequences: usize,
    pub skipped: usize,
    pub per_class: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub sequences: Vec<LabeledSequence>,
    pub summary: LoadSummary,
}

/// Loads every labelled segment that has both streams. Segments missing a
/// stream, or with no samples of a stream inside their time range, are
/// logged and skipped.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<LoadedDataset> {
    manifest.validate()?;
    let kp_files = manifest.files(&manifest.keypoint_glob)?;
    let imu_files = manifest.files(&manifest.inertial_glob)?;
    let label_files = manifest.files(&manifest.label_glob)?;
    let mut summary = LoadSummary {
        keypoint_files: kp_files.len(),
        inertial_files: imu_files.len(),
        label_files: label_files.len(),
        per_class: vec![0; manifest.classes.len()],
        ..Default::default()
    };
    let mut sequences = Vec::new();
    let mut seen = BTreeSet::new();
    for (stem, label_path) in &label_files {
        let labels = read_labels(label_path)?;
        for (row, l) in labels.iter().enumerate() {
            if l.class_id >= manifest.classes.len() {
                return Err(Error::Parse {
                    path: label_path.clone(),
                    line: row as u64 + 2,
                    detail: format!("class_id {} outside 0..{}", l.class_id, manifest.classes.len()),
                });
            }
            if !seen.insert(l.sequence_id.clone()) {
                return Err(Error::Parse {
                    path: label_path.clone(),
                    line: row as u64 + 2,
                    detail: format!("duplicate sequence_id {:?}", l.sequence_id),
                });
            }
        }
        let (Some(kp_path), Some(imu_path)) = (kp_files.get(stem), imu_files.get(stem)) else {
            log::warn!(
                "recording {stem}: missing {} stream, {} labelled segment(s) skipped",
                if kp_files.contains_key(stem) { "inertial" } else { "keypoint" },
                labels.len()
            );
            summary.skipped += labels.len();
            continue;
        };
        let frames = read_keypoints(kp_path)?;
        let table = read_inertial(imu_path)?;
        let columns = manifest
            .channels
            .iter()
            .map(|c| {
                table.channels.iter().position(|h| h == c).ok_or_else(|| Error::Parse {
                    path: imu_path.clone(),
                    line: 1,
                    detail: format!("channel {c:?} not in header"),
                })
            })
            .collect::<Result<Vec<usize>>>()?;
        for l in labels {
            let in_range = |t: f64| t >= l.start_ts && t <= l.end_ts;
            let pose: Vec<Vec<KeypointFrame>> = frames
                .iter()
                .filter(|f| in_range(f[0].timestamp))
                .cloned()
                .collect();
            let inertial: Vec<InertialSample> = table
                .samples
                .iter()
                .filter(|s| in_range(s.timestamp))
                .map(|s| InertialSample {
                    timestamp: s.timestamp,
                    channels: columns.iter().map(|&c| s.channels[c]).collect(),
                })
                .collect();
            if pose.is_empty() || inertial.is_empty() {
                log::warn!("segment {}: no samples of one stream in range, skipped", l.sequence_id);
                summary.skipped += 1;
                continue;
            }
            summary.per_class[l.class_id] += 1;
            sequences.push(LabeledSequence {
                id: l.sequence_id,
                class_id: l.class_id,
                pose,
                inertial,
            });
        }
    }
    summary.sequences = sequences.len();
    log::info!(
        "{}: {} keypoint, {} inertial, {} label files; {} sequences, {} skipped",
        manifest.name,
        summary.keypoint_files,
        summary.inertial_files,
        summary.label_files,
        summary.sequences,
        summary.skipped
    );
    Ok(LoadedDataset { sequences, summary })
}

/// Writes `sequences` as one recording per sequence (keypoints, inertial and
/// a single label row each) under `dir` and returns the matching manifest,
/// also saved as `dir/manifest.json`.
pub fn write_dataset(dir: &Path, template: &DatasetManifest, sequences: &[LabeledSequence]) -> Result<DatasetManifest> {
    for sub in ["keypoints", "inertial", "labels"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut m = template.clone();
    m.keypoint_glob = "keypoints/*.csv".into();
    m.inertial_glob = "inertial/*.csv".into();
    m.label_glob = "labels/*.csv".into();
    m.base_dir = dir.to_path_buf();
    m.validate()?;
    for seq in sequences {
        let file = format!("{}.csv", seq.id);
        write_keypoints(&dir.join("keypoints").join(&file), &seq.pose)?;
        write_inertial(&dir.join("inertial").join(&file), &m.channels, &seq.inertial)?;
        let first = seq.pose.first().map(|f| f[0].timestamp).unwrap_or(0.0);
        let last = seq.pose.last().map(|f| f[0].timestamp).unwrap_or(0.0);
        let start = first.min(seq.inertial.first().map_or(first, |s| s.timestamp));
        let end = last.max(seq.inertial.last().map_or(last, |s| s.timestamp));
        write_labels(
            &dir.join("labels").join(&file),
            &[LabelRecord {
                sequence_id: seq.id.clone(),
                class_id: seq.class_id,
                start_ts: start,
                end_ts: end,
            }],
        )?;
    }
    m.save(&dir.join("manifest.json"))?;
    Ok(m)
}
