//! Command-line front end: synthesize or load data, preprocess, train both
//! streams, evaluate, fuse and report.

mod pipeline;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

pub use pipeline::{
    emit_reports, evaluate_streams, fuse, load_prepared, load_windows, preprocess, run_pipeline, stream_dir,
    train_stream, with_marker, write_run_manifest, DataSource, FusionChoice, RunConfig, StageError, StageResult,
    STREAMS,
};
use pipeline::InStage;

use crate::data::{generate_synthetic, write_dataset, DatasetManifest, SyntheticConfig, FRAME_SIZE, INERTIAL_CHANNELS};
use crate::error::{Error, Result};
use crate::models::StreamKind;

#[derive(Debug, Parser)]
#[command(name = "har-fusion", version, about = "Two-stream activity recognition with decision-level fusion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Options {
    /// Dataset manifest (JSON); for `synth`, a synthetic config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Synthetic data: `default` or a synthetic config file.
    #[arg(long, global = true)]
    pub synth: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory; created if absent.
    #[arg(long, global = true, default_value = "run")]
    pub out: PathBuf,
    #[arg(long, global = true, value_parser = ["upfall", "utd", "berkeley", "cmhad"])]
    pub window_profile: Option<String>,
    #[arg(long, global = true, value_parser = ["default", "utd-vision"])]
    pub train_profile: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub fusion: Option<FusionChoice>,
    /// Overrides the epoch budget of both streams.
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StreamChoice {
    Vision,
    Inertial,
    Both,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset (CSV files plus manifest) to the run directory.
    Synth,
    /// Cut windows, split and scale; saves the prepared data.
    Preprocess,
    /// Train stream models on the prepared data.
    Train {
        #[arg(long, value_enum, default_value = "both")]
        stream: StreamChoice,
    },
    /// Score the test split with the trained checkpoints.
    Evaluate,
    /// Fuse the test scores and write metrics and confusion matrices.
    Fuse,
    /// Run every stage end to end.
    Pipeline,
    /// Regenerate the table and heatmaps from the metrics in a run directory.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Preprocess => "preprocess",
            Command::Train { .. } => "train",
            Command::Evaluate => "evaluate",
            Command::Fuse => "fuse",
            Command::Pipeline => "pipeline",
            Command::Report => "report",
        }
    }
}

fn read_synth(spec: &str) -> Result<SyntheticConfig> {
    if spec == "default" {
        return Ok(SyntheticConfig::default());
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{spec}: {e}")))
}

/// Builds the run config from flags for commands that start from raw data.
pub fn resolve_config(opts: &Options) -> Result<RunConfig> {
    let (source, seed) = match (&opts.config, &opts.synth) {
        (Some(_), Some(_)) => return Err(Error::Config("pass either --config or --synth, not both".into())),
        (None, None) => return Err(Error::Config("no data source: pass --config <manifest> or --synth default".into())),
        (None, Some(spec)) => {
            let mut cfg = read_synth(spec)?;
            if let Some(s) = opts.seed {
                cfg.seed = s;
            }
            let seed = cfg.seed;
            (DataSource::Synthetic(cfg), seed)
        }
        (Some(path), None) => {
            if !path.exists() {
                return Err(Error::Config(format!("manifest {} does not exist", path.display())));
            }
            let manifest = DatasetManifest::load(path)?;
            (
                DataSource::Manifest {
                    path: path.clone(),
                    manifest,
                },
                opts.seed.unwrap_or(0),
            )
        }
    };
    let cfg = RunConfig {
        source,
        window_profile: opts.window_profile.clone(),
        train_profile: opts.train_profile.clone().unwrap_or_else(|| "default".into()),
        fusion: opts.fusion.unwrap_or(FusionChoice::Both),
        seed,
        epochs: opts.epochs,
        out: opts.out.clone(),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Reads the config recorded by an earlier command in `out`.
pub fn recorded_config(out: &Path) -> Result<RunConfig> {
    let path = out.join("run_manifest.json");
    if !path.exists() {
        return Err(Error::State(format!(
            "missing run manifest at {}; run `preprocess` first",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let doc: serde_json::Value = serde_json::from_str(&text)?;
    let mut cfg: RunConfig = serde_json::from_value(
        doc.get("config")
            .cloned()
            .ok_or_else(|| Error::State(format!("{} has no config", path.display())))?,
    )?;
    cfg.out = out.to_path_buf();
    Ok(cfg)
}

fn synth_command(opts: &Options) -> Result<()> {
    let spec = match (&opts.synth, &opts.config) {
        (Some(s), None) => s.clone(),
        (None, Some(p)) => p.to_string_lossy().into_owned(),
        (None, None) => "default".into(),
        (Some(_), Some(_)) => return Err(Error::Config("pass either --config or --synth, not both".into())),
    };
    let mut cfg = read_synth(&spec)?;
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    let seqs = generate_synthetic(&cfg)?;
    let template = DatasetManifest {
        name: "synthetic".into(),
        classes: (0..cfg.n_classes).map(|c| format!("class{c}")).collect(),
        keypoint_glob: String::new(),
        inertial_glob: String::new(),
        label_glob: String::new(),
        keypoint_rate_hz: cfg.keypoint_rate_hz,
        inertial_rate_hz: cfg.inertial_rate_hz,
        window_profile: opts.window_profile.clone().unwrap_or_else(|| "cmhad".into()),
        channels: INERTIAL_CHANNELS.iter().map(|s| s.to_string()).collect(),
        frame_size: FRAME_SIZE,
        base_dir: PathBuf::new(),
    };
    let dir = opts.out.join("data");
    write_dataset(&dir, &template, &seqs)?;
    let path = opts.out.join("synth_config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg)? + "\n").map_err(|e| Error::io(&path, e))?;
    log::info!("wrote {} sequences to {}", seqs.len(), dir.display());
    Ok(())
}

/// Executes one command.
pub fn run(cli: &Cli) -> StageResult<()> {
    let opts = &cli.opts;
    let out = opts.out.as_path();
    let name = cli.command.name();
    with_marker(out, || match &cli.command {
        Command::Synth => synth_command(opts).stage("synth"),
        Command::Pipeline => {
            let cfg = resolve_config(opts).stage("config")?;
            let cmp = run_pipeline(&cfg)?;
            print!("{}", cmp.to_table());
            Ok(())
        }
        Command::Preprocess => {
            let cfg = resolve_config(opts).stage("config")?;
            write_run_manifest(&cfg, name).stage("config")?;
            let windows = load_windows(&cfg).stage("data")?;
            preprocess(&cfg, &windows).stage("preprocess")?;
            Ok(())
        }
        Command::Train { stream } => {
            let mut cfg = recorded_config(out).stage("config")?;
            if let Some(s) = opts.seed.filter(|&s| s != cfg.seed) {
                return Err(Error::Config(format!(
                    "--seed {s} differs from the seed {} the data was prepared with",
                    cfg.seed
                )))
                .stage("config");
            }
            if let Some(p) = &opts.train_profile {
                cfg.train_profile = p.clone();
            }
            if opts.epochs.is_some() {
                cfg.epochs = opts.epochs;
            }
            cfg.validate().stage("config")?;
            write_run_manifest(&cfg, name).stage("config")?;
            let (data, n_classes) = load_prepared(out).stage("train")?;
            for kind in STREAMS {
                let wanted = match stream {
                    StreamChoice::Both => true,
                    StreamChoice::Vision => kind == StreamKind::Vision,
                    StreamChoice::Inertial => kind == StreamKind::Inertial,
                };
                if wanted {
                    train_stream(&cfg, &data, n_classes, kind).stage("train")?;
                }
            }
            Ok(())
        }
        Command::Evaluate => {
            let (data, _) = load_prepared(out).stage("evaluate")?;
            evaluate_streams(out, &data).stage("evaluate")
        }
        Command::Fuse => {
            let choice = match opts.fusion {
                Some(f) => f,
                None => recorded_config(out).map(|c| c.fusion).unwrap_or(FusionChoice::Both),
            };
            let cmp = fuse(out, choice).stage("fuse")?;
            print!("{}", cmp.to_table());
            Ok(())
        }
        Command::Report => {
            let table = emit_reports(out).stage("report")?;
            print!("{table}");
            Ok(())
        }
    })
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.error.exit_code()
        }
    }
}
