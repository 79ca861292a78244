use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// One clip in a dataset manifest. `label` is optional so that a label-free
/// copy of a dataset stays loadable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    pub path: String,
    pub sample_rate: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub n_classes: usize,
    pub clips: Vec<ClipEntry>,
}

impl Manifest {
    pub fn new(n_classes: usize, clips: Vec<ClipEntry>) -> Self {
        Self { schema_version: MANIFEST_SCHEMA_VERSION, n_classes, clips }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Manifest = serde_json::from_slice(&fs::read(path)?)?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Schema { expected: MANIFEST_SCHEMA_VERSION, found: m.schema_version });
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

/// Raw little-endian f32 samples, no header.
pub fn write_waveform(path: &Path, w: &Waveform) -> Result<()> {
    let bytes: Vec<u8> = w.samples.iter().flat_map(|s| s.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_waveform(path: &Path, sample_rate: u32) -> Result<Waveform> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Format(format!("{}: length {} is not a multiple of 4", path.display(), bytes.len())));
    }
    let samples = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok(Waveform::new(samples, sample_rate))
}
