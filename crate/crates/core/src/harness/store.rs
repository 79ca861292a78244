//! Dataset directories: `manifest.json` plus one raw f32 file per clip.

use std::fs;
use std::path::Path;

use super::synth::Dataset;
use crate::dsp::{read_waveform, write_waveform, ClipEntry, Manifest, Waveform};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Clips read back from disk; labels are present only if the manifest has them.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredDataset {
    pub clips: Vec<Waveform>,
    pub labels: Option<Vec<usize>>,
    pub n_classes: usize,
}

impl StoredDataset {
    pub fn into_labeled(self) -> Result<Dataset> {
        let labels = self.labels.ok_or_else(|| Error::Config("dataset manifest carries no labels".into()))?;
        Ok(Dataset { clips: self.clips, labels, n_classes: self.n_classes })
    }
}

pub fn write_dataset(dir: &Path, data: &Dataset, with_labels: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(data.len());
    for (i, (w, &label)) in data.clips.iter().zip(&data.labels).enumerate() {
        let name = format!("clip_{i:05}.f32");
        write_waveform(&dir.join(&name), w)?;
        entries.push(ClipEntry { path: name, sample_rate: w.sample_rate, label: with_labels.then_some(label) });
    }
    Manifest::new(data.n_classes, entries).save(&dir.join(MANIFEST_FILE))
}

pub fn read_dataset(dir: &Path) -> Result<StoredDataset> {
    let manifest = Manifest::load(&dir.join(MANIFEST_FILE))?;
    let clips =
        manifest.clips.iter().map(|c| read_waveform(&dir.join(&c.path), c.sample_rate)).collect::<Result<Vec<_>>>()?;
    let labels: Option<Vec<usize>> = manifest.clips.iter().map(|c| c.label).collect();
    if let Some(bad) = labels.iter().flatten().find(|&&l| l >= manifest.n_classes) {
        return Err(Error::Format(format!("label {bad} outside {} classes", manifest.n_classes)));
    }
    Ok(StoredDataset { clips, labels, n_classes: manifest.n_classes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::{gen_dataset, Split, SyntheticDatasetSpec};

    #[test]
    fn dataset_directory_roundtrip() {
        let spec =
            SyntheticDatasetSpec { n_classes: 2, samples_per_class: 2, clip_seconds: 0.05, ..Default::default() };
        let d = gen_dataset(&spec, Split::Test).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &d, true).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap().into_labeled().unwrap(), d);

        let blind = dir.path().join("blind");
        write_dataset(&blind, &d, false).unwrap();
        let s = read_dataset(&blind).unwrap();
        assert!(s.labels.is_none());
        assert_eq!(s.clips, d.clips);
    }
}
