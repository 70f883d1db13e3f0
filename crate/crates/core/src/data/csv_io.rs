//! Readers and writers for the keypoint, inertial and label CSV schemas.
//!
//! Keypoint files: `timestamp,person_id,j0_x,j0_y,j0_c,...,j24_c`, one row
//! per detected person; rows sharing a timestamp form one frame.
//! Inertial files: `timestamp,<channel>,...`. Label files:
//! `sequence_id,class_id,start_ts,end_ts`.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{InertialSample, Joint, KeypointFrame, JOINTS};

/// One labelled segment of a recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub sequence_id: String,
    pub class_id: usize,
    pub start_ts: f64,
    pub end_ts: f64,
}

/// Inertial rows with the channel names from the file header.
#[derive(Debug, Clone, PartialEq)]
pub struct InertialTable {
    pub channels: Vec<String>,
    pub samples: Vec<InertialSample>,
}

pub fn keypoint_header() -> Vec<String> {
    let mut cols = vec!["timestamp".to_string(), "person_id".to_string()];
    for j in 0..JOINTS {
        cols.extend(["x", "y", "c"].iter().map(|a| format!("j{j}_{a}")));
    }
    cols
}

fn parse_err(path: &Path, line: u64, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file))
}

fn header(path: &Path, rdr: &mut csv::Reader<File>) -> Result<Vec<String>> {
    let h = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?;
    Ok(h.iter().map(str::to_string).collect())
}

/// Iterates records with their 1-based line numbers.
fn records(path: &Path, rdr: &mut csv::Reader<File>) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut out = Vec::new();
    for rec in rdr.records() {
        match rec {
            Ok(r) => {
                let line = r.position().map_or(0, |p| p.line());
                out.push((line, r));
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(parse_err(path, line, e.to_string()));
            }
        }
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
    let raw = rec.get(idx).unwrap_or("");
    raw.parse()
        .map_err(|_| parse_err(path, line, format!("column {name}: cannot parse {raw:?}")))
}

fn finite(path: &Path, line: u64, v: f64, name: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_err(path, line, format!("column {name}: non-finite value")))
    }
}

/// Reads a keypoint file into frames of candidate persons.
pub fn read_keypoints(path: &Path) -> Result<Vec<Vec<KeypointFrame>>> {
    let mut rdr = reader(path)?;
    let expected = keypoint_header();
    let got = header(path, &mut rdr)?;
    if got != expected {
        return Err(parse_err(
            path,
            1,
            format!("expected {} keypoint columns starting timestamp,person_id", expected.len()),
        ));
    }
    let mut frames: Vec<Vec<KeypointFrame>> = Vec::new();
    let mut last_ts = f64::NEG_INFINITY;
    for (line, rec) in records(path, &mut rdr)? {
        let ts = finite(path, line, field(path, line, &rec, 0, "timestamp")?, "timestamp")?;
        field::<u64>(path, line, &rec, 1, "person_id")?;
        let mut joints = Vec::with_capacity(JOINTS);
        for j in 0..JOINTS {
            let mut v = [0.0; 3];
            for (a, slot) in v.iter_mut().enumerate() {
                let col = 2 + 3 * j + a;
                *slot = finite(path, line, field(path, line, &rec, col, &expected[col])?, &expected[col])?;
            }
            joints.push(Joint::new(v[0], v[1], v[2]));
        }
        let frame = KeypointFrame::new(ts, joints).map_err(|e| parse_err(path, line, e.to_string()))?;
        if ts < last_ts {
            return Err(parse_err(path, line, format!("timestamp {ts} decreases (previous {last_ts})")));
        }
        if ts == last_ts {
            frames.last_mut().expect("previous frame").push(frame);
        } else {
            frames.push(vec![frame]);
        }
        last_ts = ts;
    }
    Ok(frames)
}

pub fn write_keypoints(path: &Path, frames: &[Vec<KeypointFrame>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(keypoint_header()).map_err(|e| csv_io(path, e))?;
    for persons in frames {
        for (pid, f) in persons.iter().enumerate() {
            let mut row = vec![f.timestamp.to_string(), pid.to_string()];
            for j in &f.joints {
                row.extend([j.x.to_string(), j.y.to_string(), j.c.to_string()]);
            }
            w.write_record(&row).map_err(|e| csv_io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads an inertial file; timestamps must be strictly increasing.
pub fn read_inertial(path: &Path) -> Result<InertialTable> {
    let mut rdr = reader(path)?;
    let cols = header(path, &mut rdr)?;
    if cols.first().map(String::as_str) != Some("timestamp") || cols.len() < 2 {
        return Err(parse_err(path, 1, "expected header timestamp,<channel>,..."));
    }
    let channels = cols[1..].to_vec();
    let mut samples: Vec<InertialSample> = Vec::new();
    for (line, rec) in records(path, &mut rdr)? {
        let timestamp = finite(path, line, field(path, line, &rec, 0, "timestamp")?, "timestamp")?;
        if let Some(prev) = samples.last() {
            if timestamp <= prev.timestamp {
                return Err(parse_err(
                    path,
                    line,
                    format!("timestamp {timestamp} not after previous {}", prev.timestamp),
                ));
            }
        }
        let values = channels
            .iter()
            .enumerate()
            .map(|(i, name)| finite(path, line, field(path, line, &rec, i + 1, name)?, name))
            .collect::<Result<Vec<f64>>>()?;
        samples.push(InertialSample {
            timestamp,
            channels: values,
        });
    }
    Ok(InertialTable { channels, samples })
}

pub fn write_inertial(path: &Path, channels: &[String], samples: &[InertialSample]) -> Result<()> {
    let mut w = writer(path)?;
    let mut head = vec!["timestamp".to_string()];
    head.extend(channels.iter().cloned());
    w.write_record(&head).map_err(|e| csv_io(path, e))?;
    for s in samples {
        if s.channels.len() != channels.len() {
            return Err(Error::Validation(format!(
                "inertial sample has {} channels, header has {}",
                s.channels.len(),
                channels.len()
            )));
        }
        let mut row = vec![s.timestamp.to_string()];
        row.extend(s.channels.iter().map(f64::to_string));
        w.write_record(&row).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>> {
    let mut rdr = reader(path)?;
    let cols = header(path, &mut rdr)?;
    if cols != ["sequence_id", "class_id", "start_ts", "end_ts"] {
        return Err(parse_err(path, 1, "expected header sequence_id,class_id,start_ts,end_ts"));
    }
    let mut out = Vec::new();
    for (line, rec) in records(path, &mut rdr)? {
        let sequence_id = rec.get(0).unwrap_or("").to_string();
        if sequence_id.is_empty() {
            return Err(parse_err(path, line, "empty sequence_id"));
        }
        let start_ts = finite(path, line, field(path, line, &rec, 2, "start_ts")?, "start_ts")?;
        let end_ts = finite(path, line, field(path, line, &rec, 3, "end_ts")?, "end_ts")?;
        if end_ts < start_ts {
            return Err(parse_err(path, line, format!("end_ts {end_ts} before start_ts {start_ts}")));
        }
        out.push(LabelRecord {
            sequence_id,
            class_id: field(path, line, &rec, 1, "class_id")?,
            start_ts,
            end_ts,
        });
    }
    Ok(out)
}

pub fn write_labels(path: &Path, labels: &[LabelRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["sequence_id", "class_id", "start_ts", "end_ts"])
        .map_err(|e| csv_io(path, e))?;
    for l in labels {
        w.write_record([
            l.sequence_id.clone(),
            l.class_id.to_string(),
            l.start_ts.to_string(),
            l.end_ts.to_string(),
        ])
        .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Validation(format!("csv write to {}: {other:?}", path.display())),
    }
}

