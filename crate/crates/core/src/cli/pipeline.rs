//! Pipeline stages and the on-disk layout of a run directory.
//!
//! ```text
//! <out>/run_manifest.json          config, seed and config hash
//! <out>/prepared.json, .bin        scaled train/val/test windows
//! <out>/<stream>/best.json, .bin   checkpoint with the best validation accuracy
//! <out>/<stream>/final.json, .bin  checkpoint after the last epoch
//! <out>/<stream>/history.csv, .svg
//! <out>/<stream>/test_scores.csv   softmax scores on the test split
//! <out>/metrics.csv, metrics.txt   per-stream and fused summary
//! <out>/confusion_<row>.csv, .svg
//! <out>/FAILED                     present when the last command failed
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{generate_synthetic, load_dataset, DatasetManifest, SyntheticConfig, FRAME_SIZE};
use crate::error::{Error, Result};
use crate::fusion::{compare_streams, format_table, Comparison, ConfusionMatrix, FusionMethod};
use crate::models::{StreamKind, StreamModel, ModelSpec, TrainConfig, train};
use crate::preprocess::{build_windows, prepare_splits, PreparedData, SplitSpec, WindowSpec, WindowedDataset};
use crate::tensor::{load_checkpoint, save_checkpoint, Tensor};

pub const STREAMS: [StreamKind; 2] = [StreamKind::Vision, StreamKind::Inertial];

/// Which fused rows to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FusionChoice {
    Average,
    Max,
    Both,
}

impl FusionChoice {
    fn includes(self, m: FusionMethod) -> bool {
        matches!(
            (self, m),
            (FusionChoice::Both, _) | (FusionChoice::Average, FusionMethod::Average) | (FusionChoice::Max, FusionMethod::Max)
        )
    }
}

/// Where recordings come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    Manifest { path: PathBuf, manifest: DatasetManifest },
}

/// Everything that determines a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub source: DataSource,
    /// Overrides the manifest's profile; synthetic data defaults to cmhad.
    pub window_profile: Option<String>,
    pub train_profile: String,
    pub fusion: FusionChoice,
    pub seed: u64,
    /// Overrides the profile's epoch budget for both streams.
    pub epochs: Option<usize>,
    #[serde(skip)]
    pub out: PathBuf,
}

impl RunConfig {
    pub fn window_spec(&self) -> Result<WindowSpec> {
        let name = match (&self.window_profile, &self.source) {
            (Some(p), _) => p.as_str(),
            (None, DataSource::Manifest { manifest, .. }) => manifest.window_profile.as_str(),
            (None, DataSource::Synthetic(_)) => "cmhad",
        };
        WindowSpec::profile(name)
    }

    pub fn n_classes(&self) -> usize {
        match &self.source {
            DataSource::Synthetic(c) => c.n_classes,
            DataSource::Manifest { manifest, .. } => manifest.classes.len(),
        }
    }

    pub fn train_config(&self, kind: StreamKind) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::profile(&self.train_profile, kind, self.seed)?;
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.window_spec()?;
        for kind in STREAMS {
            self.train_config(kind)?;
        }
        match &self.source {
            DataSource::Synthetic(c) => c.validate(),
            DataSource::Manifest { manifest, .. } => manifest.validate(),
        }
    }

    /// SHA-256 of the canonical JSON of the config (output dir excluded).
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_vec(self)?;
        Ok(Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// An error tagged with the stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

pub type StageResult<T> = std::result::Result<T, StageError>;

pub(crate) trait InStage<T> {
    fn stage(self, stage: &'static str) -> StageResult<T>;
}

impl<T> InStage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> StageResult<T> {
        self.map_err(|error| StageError { stage, error })
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Fails with a state error naming `what` when `path` is absent.
fn require(path: &Path, what: &str, producer: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::State(format!(
            "missing {what} at {}; run `{producer}` first",
            path.display()
        )))
    }
}

pub fn stream_dir(out: &Path, kind: StreamKind) -> PathBuf {
    out.join(kind.name())
}

/// Writes the run manifest: the resolved config, its hash and the command.
pub fn write_run_manifest(cfg: &RunConfig, command: &str) -> Result<()> {
    ensure_dir(&cfg.out)?;
    let doc = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config_sha256": cfg.hash()?,
        "config": cfg,
    });
    write(&cfg.out.join("run_manifest.json"), &(serde_json::to_string_pretty(&doc)? + "\n"))
}

/// Generates or loads the recordings and cuts aligned windows.
pub fn load_windows(cfg: &RunConfig) -> Result<WindowedDataset> {
    let spec = cfg.window_spec()?;
    match &cfg.source {
        DataSource::Synthetic(s) => build_windows(&generate_synthetic(s)?, spec, None, FRAME_SIZE),
        DataSource::Manifest { manifest, .. } => {
            let loaded = load_dataset(manifest)?;
            build_windows(&loaded.sequences, spec, Some(manifest.target_rate()), manifest.frame_size)
        }
    }
}

const PARTS: [&str; 3] = ["train", "val", "test"];

fn parts(p: &PreparedData) -> [&WindowedDataset; 3] {
    [&p.train, &p.val, &p.test]
}

fn labels_tensor(labels: &[usize]) -> Tensor {
    Tensor::from_vec(labels.iter().map(|&l| l as f64).collect())
}

/// Splits and scales `data`, then saves the result under `out`.
pub fn preprocess(cfg: &RunConfig, data: &WindowedDataset) -> Result<PreparedData> {
    let split = SplitSpec {
        seed: cfg.seed,
        ..SplitSpec::default()
    };
    let prepared = prepare_splits(data, cfg.n_classes(), &split)?;
    let label_tensors: Vec<Tensor> = parts(&prepared).iter().map(|d| labels_tensor(&d.labels)).collect();
    let mut named: Vec<(String, &Tensor)> = Vec::new();
    for ((name, part), labels) in PARTS.iter().zip(parts(&prepared)).zip(&label_tensors) {
        named.push((format!("{name}/vision"), &part.vision));
        named.push((format!("{name}/inertial"), &part.inertial));
        named.push((format!("{name}/labels"), labels));
    }
    let meta = serde_json::json!({
        "n_classes": cfg.n_classes(),
        "rate_hz": data.rate_hz,
        "window": cfg.window_spec()?,
        "indices": prepared.indices,
        "vision_scaler": prepared.vision_scaler,
        "inertial_scaler": prepared.inertial_scaler,
        "sequence_ids": parts(&prepared).map(|p| p.sequence_ids.clone()),
    });
    let refs: Vec<(&str, &Tensor)> = named.iter().map(|(n, t)| (n.as_str(), *t)).collect();
    save_checkpoint(&cfg.out.join("prepared.json"), &refs, meta)?;
    Ok(prepared)
}

fn meta_field<T: serde::de::DeserializeOwned>(meta: &serde_json::Value, key: &str) -> Result<T> {
    let v = meta
        .get(key)
        .cloned()
        .ok_or_else(|| Error::Checkpoint(format!("prepared data lacks {key}")))?;
    Ok(serde_json::from_value(v)?)
}

/// Reads back what [`preprocess`] saved.
pub fn load_prepared(out: &Path) -> Result<(PreparedData, usize)> {
    let path = out.join("prepared.json");
    require(&path, "prepared data", "preprocess")?;
    let ck = load_checkpoint(&path)?;
    let get = |name: String| {
        ck.get(&name)
            .cloned()
            .ok_or_else(|| Error::Checkpoint(format!("prepared data lacks tensor {name}")))
    };
    let ids: [Vec<String>; 3] = meta_field(&ck.metadata, "sequence_ids")?;
    let rate_hz: f64 = meta_field(&ck.metadata, "rate_hz")?;
    let mut split = Vec::with_capacity(3);
    for (name, ids) in PARTS.iter().zip(ids) {
        let labels = get(format!("{name}/labels"))?.data().iter().map(|&v| v as usize).collect();
        split.push(WindowedDataset {
            vision: get(format!("{name}/vision"))?,
            inertial: get(format!("{name}/inertial"))?,
            labels,
            sequence_ids: ids,
            rate_hz,
        });
    }
    let test = split.pop().expect("three parts");
    let val = split.pop().expect("three parts");
    let train = split.pop().expect("three parts");
    Ok((
        PreparedData {
            train,
            val,
            test,
            indices: meta_field(&ck.metadata, "indices")?,
            vision_scaler: meta_field(&ck.metadata, "vision_scaler")?,
            inertial_scaler: meta_field(&ck.metadata, "inertial_scaler")?,
        },
        meta_field(&ck.metadata, "n_classes")?,
    ))
}

fn stream_input(d: &WindowedDataset, kind: StreamKind) -> &Tensor {
    match kind {
        StreamKind::Vision => &d.vision,
        StreamKind::Inertial => &d.inertial,
    }
}

/// Trains one stream and writes its checkpoints and history.
pub fn train_stream(cfg: &RunConfig, data: &PreparedData, n_classes: usize, kind: StreamKind) -> Result<()> {
    let dir = stream_dir(&cfg.out, kind);
    ensure_dir(&dir)?;
    let x = stream_input(&data.train, kind);
    let spec = ModelSpec {
        kind,
        n_classes,
        window_len: x.shape()[1],
        features: x.shape()[2],
        init_seed: cfg.seed,
    };
    let mut model = StreamModel::build(spec)?;
    let tc = cfg.train_config(kind)?;
    log::info!("training {} stream for {} epochs", kind.name(), tc.epochs);
    let outcome = train(
        &mut model,
        x,
        &data.train.labels,
        stream_input(&data.val, kind),
        &data.val.labels,
        &tc,
    )?;
    write(&dir.join("history.csv"), &outcome.history.to_csv())?;
    write(
        &dir.join("history.svg"),
        &outcome.history.to_svg(&format!("{} stream", kind.name())),
    )?;
    let extra = serde_json::json!({ "epochs": tc.epochs, "best_epoch": outcome.best_epoch });
    model.save(&dir.join("final.json"), extra.clone())?;
    model.store = outcome.best;
    model.save(&dir.join("best.json"), extra)?;
    Ok(())
}

fn scores_csv(scores: &Tensor, labels: &[usize]) -> String {
    let classes = scores.shape()[1];
    let mut s = String::from("sample,label");
    for c in 0..classes {
        s.push_str(&format!(",p{c}"));
    }
    s.push('\n');
    for (i, (row, y)) in scores.data().chunks(classes).zip(labels).enumerate() {
        s.push_str(&format!("{i},{y}"));
        for v in row {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s
}

fn parse_scores(path: &Path) -> Result<(Tensor, Vec<usize>)> {
    let text = read(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let classes = header.split(',').count().saturating_sub(2);
    let bad = |line: usize, detail: &str| Error::Parse {
        path: path.to_path_buf(),
        line: line as u64,
        detail: detail.to_string(),
    };
    if !header.starts_with("sample,label") || classes == 0 {
        return Err(bad(1, "expected header sample,label,p0,..."));
    }
    let (mut data, mut labels) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != classes + 2 {
            return Err(bad(i + 2, "wrong number of columns"));
        }
        labels.push(cells[1].parse().map_err(|_| bad(i + 2, "bad label"))?);
        for c in &cells[2..] {
            data.push(c.parse::<f64>().map_err(|_| bad(i + 2, "bad score"))?);
        }
    }
    Ok((Tensor::new(vec![labels.len(), classes], data)?, labels))
}

/// Scores the test split with each stream's best checkpoint.
pub fn evaluate_streams(out: &Path, data: &PreparedData) -> Result<()> {
    for kind in STREAMS {
        let dir = stream_dir(out, kind);
        let ckpt = dir.join("best.json");
        require(&ckpt, &format!("{} checkpoint", kind.name()), "train")?;
        let model = StreamModel::load(&ckpt)?;
        let scores = model.predict_scores(stream_input(&data.test, kind))?;
        write(&dir.join("test_scores.csv"), &scores_csv(&scores, &data.test.labels))?;
    }
    Ok(())
}

fn file_tag(name: &str) -> String {
    name.to_lowercase().replace("fusion(", "fusion_").replace(')', "")
}

/// Fuses the saved test scores and writes the comparison and confusion
/// matrices.
pub fn fuse(out: &Path, choice: FusionChoice) -> Result<Comparison> {
    let mut loaded = Vec::new();
    for kind in STREAMS {
        let path = stream_dir(out, kind).join("test_scores.csv");
        require(&path, &format!("{} test scores", kind.name()), "evaluate")?;
        loaded.push(parse_scores(&path)?);
    }
    let (inertial, vision) = (loaded.pop().expect("two streams"), loaded.pop().expect("two streams"));
    if vision.1 != inertial.1 {
        return Err(Error::Alignment("vision and inertial test labels differ".into()));
    }
    let mut cmp = compare_streams(&vision.0, &inertial.0, &vision.1)?;
    cmp.rows.retain(|r| {
        [FusionMethod::Average, FusionMethod::Max]
            .iter()
            .all(|&m| r.name != m.label() || choice.includes(m))
    });
    write(&out.join("metrics.csv"), &cmp.to_csv())?;
    for r in &cmp.rows {
        write(&out.join(format!("confusion_{}.csv", file_tag(&r.name))), &r.confusion.to_csv())?;
    }
    emit_reports(out)?;
    Ok(cmp)
}

/// Regenerates the text table and heatmaps from the CSVs in `out`.
pub fn emit_reports(out: &Path) -> Result<String> {
    let metrics = out.join("metrics.csv");
    if !metrics.exists() {
        return Err(Error::Report(format!("missing metrics file {}", metrics.display())));
    }
    let rows = Comparison::parse_csv(&read(&metrics)?)?;
    let table = format_table(&rows);
    write(&out.join("metrics.txt"), &table)?;
    for (name, _) in &rows {
        let tag = file_tag(name);
        let path = out.join(format!("confusion_{tag}.csv"));
        if !path.exists() {
            return Err(Error::Report(format!("missing confusion matrix {}", path.display())));
        }
        let cm = ConfusionMatrix::parse_csv(&read(&path)?)?;
        write(&out.join(format!("confusion_{tag}.svg")), &cm.to_svg(name))?;
    }
    Ok(table)
}

fn failed_marker(out: &Path) -> PathBuf {
    out.join("FAILED")
}

/// Runs `body`, leaving a FAILED marker in an existing `out` if it errors
/// and removing a stale one if it succeeds.
pub fn with_marker<T>(out: &Path, body: impl FnOnce() -> StageResult<T>) -> StageResult<T> {
    let marker = failed_marker(out);
    match body() {
        Ok(v) => {
            if marker.exists() {
                fs::remove_file(&marker).map_err(|e| Error::io(&marker, e)).stage("finish")?;
            }
            Ok(v)
        }
        Err(e) => {
            if out.is_dir() {
                let _ = fs::write(&marker, format!("stage: {}\nerror: {}\n", e.stage, e.error));
            }
            Err(e)
        }
    }
}

/// Every stage end to end: data, preprocess, train both streams, evaluate,
/// fuse and report.
pub fn run_pipeline(cfg: &RunConfig) -> StageResult<Comparison> {
    with_marker(&cfg.out, || {
        cfg.validate().stage("config")?;
        write_run_manifest(cfg, "pipeline").stage("config")?;
        let windows = load_windows(cfg).stage("data")?;
        let prepared = preprocess(cfg, &windows).stage("preprocess")?;
        for kind in STREAMS {
            let stage = match kind {
                StreamKind::Vision => "train-vision",
                StreamKind::Inertial => "train-inertial",
            };
            train_stream(cfg, &prepared, cfg.n_classes(), kind).stage(stage)?;
        }
        evaluate_streams(&cfg.out, &prepared).stage("evaluate")?;
        fuse(&cfg.out, cfg.fusion).stage("fuse")
    })
}
