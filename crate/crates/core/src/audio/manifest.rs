use super::AudioError;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const N_CLASSES: usize = 12;

/// Instrument labels in the order used for class indices and confusion matrices.
pub const LABELS: [&str; N_CLASSES] = [
    "Accordion",
    "Acoustic_guitar",
    "Bass_drum",
    "Bass_guitar",
    "Electric_guitar",
    "Female_singing",
    "Glockenspiel",
    "Gong",
    "Harmonica",
    "Hi-hat",
    "Male_singing",
    "Marimba_and_xylophone",
];

/// Maps a label name to its class index. Accepts underscores or spaces.
pub fn label_index(name: &str) -> Option<usize> {
    let norm = name.trim().replace(' ', "_");
    LABELS.iter().position(|l| l.eq_ignore_ascii_case(&norm))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub fname: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
struct Row {
    fname: String,
    label: String,
}

impl DatasetManifest {
    pub fn label_set(&self) -> &'static [&'static str; N_CLASSES] {
        &LABELS
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reads a `fname,label` CSV. Every label must belong to [`LABELS`].
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, AudioError> {
        let mut rdr = csv::Reader::from_path(path.as_ref()).map_err(|e| AudioError::Manifest(e.to_string()))?;
        let mut entries = Vec::new();
        for (line, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| AudioError::Manifest(e.to_string()))?;
            let label = label_index(&row.label).ok_or_else(|| {
                AudioError::Manifest(format!("row {}: label {:?} not in label set", line + 2, row.label))
            })?;
            entries.push(ManifestEntry { fname: row.fname, label });
        }
        Ok(Self { entries })
    }

    /// Reads a `fname,labels` CSV and keeps rows carrying exactly one label from [`LABELS`].
    /// Multi-label rows (comma-separated inside the field) and foreign labels are dropped.
    pub fn read_csv_filtered(path: impl AsRef<Path>) -> Result<Self, AudioError> {
        let mut rdr = csv::Reader::from_path(path.as_ref()).map_err(|e| AudioError::Manifest(e.to_string()))?;
        let mut entries = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| AudioError::Manifest(e.to_string()))?;
            let (Some(fname), Some(labels)) = (row.get(0), row.get(1)) else {
                continue;
            };
            if labels.contains(',') {
                continue;
            }
            if let Some(label) = label_index(labels) {
                entries.push(ManifestEntry { fname: fname.to_string(), label });
            }
        }
        Ok(Self { entries })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), AudioError> {
        let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| AudioError::Manifest(e.to_string()))?;
        w.write_record(["fname", "label"]).map_err(|e| AudioError::Manifest(e.to_string()))?;
        for e in &self.entries {
            w.write_record([e.fname.as_str(), LABELS[e.label]])
                .map_err(|e| AudioError::Manifest(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Train/validation partition of manifest indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub seed: u64,
}

impl Split {
    pub fn read_json(path: impl AsRef<Path>) -> Result<Self, AudioError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| AudioError::Manifest(e.to_string()))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<(), AudioError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| AudioError::Manifest(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Seeded random partition into `train_count` training and the remaining validation entries.
pub fn split_dataset(m: &DatasetManifest, train_count: usize, seed: u64) -> Result<Split, AudioError> {
    let n = m.entries.len();
    if train_count == 0 || train_count >= n {
        return Err(AudioError::SplitRange { train_count, entries: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..train_count].to_vec();
    let mut validation = idx[train_count..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    Ok(Split { train, validation, seed })
}
