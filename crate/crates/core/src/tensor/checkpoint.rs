//! Checkpoint format: a JSON manifest listing every tensor (name, shape,
//! dtype, byte offset, byte length) plus a sidecar `.bin` file holding the
//! little-endian `f64` values back to back in manifest order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

const FORMAT: &str = "har-fusion-checkpoint";
const DTYPE: &str = "f64-le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
    pub bytes: u64,
    pub trainable: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    data_file: String,
    #[serde(default)]
    metadata: serde_json::Value,
    tensors: Vec<ManifestEntry>,
}

/// A loaded checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub metadata: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

fn sidecar(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Writes `tensors` to `manifest_path` (JSON) and its `.bin` sidecar.
pub fn save_checkpoint(manifest_path: &Path, tensors: &[(&str, &Tensor)], metadata: serde_json::Value) -> Result<()> {
    let bin_path = sidecar(manifest_path);
    let mut entries = Vec::with_capacity(tensors.len());
    let mut bytes = Vec::new();
    for (name, t) in tensors {
        let offset = bytes.len() as u64;
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(ManifestEntry {
            name: (*name).to_string(),
            shape: t.shape().to_vec(),
            dtype: DTYPE.into(),
            offset,
            bytes: bytes.len() as u64 - offset,
            trainable: t.requires_grad(),
        });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: 1,
        data_file: bin_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        metadata,
        tensors: entries,
    };
    if let Some(dir) = manifest_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))?;
    fs::write(&bin_path, bytes).map_err(|e| Error::io(&bin_path, e))?;
    Ok(())
}

pub fn load_checkpoint(manifest_path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format != FORMAT {
        return Err(Error::Checkpoint(format!("unknown format {:?}", manifest.format)));
    }
    let bin_path = manifest_path.with_file_name(&manifest.data_file);
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for entry in manifest.tensors {
        if entry.dtype != DTYPE {
            return Err(Error::Checkpoint(format!("{}: unsupported dtype {}", entry.name, entry.dtype)));
        }
        let count: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start + count * 8;
        if entry.bytes as usize != count * 8 || end > bytes.len() {
            return Err(Error::Checkpoint(format!("{}: byte range out of bounds", entry.name)));
        }
        let data = bytes[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of 8")))
            .collect();
        let mut t = Tensor::new(entry.shape, data)?;
        t.set_requires_grad(entry.trainable);
        tensors.push((entry.name, t));
    }
    Ok(Checkpoint {
        metadata: manifest.metadata,
        tensors,
    })
}
