//! Audio containers, WAV I/O, resampling and dataset manifests.

mod manifest;
mod resample;
mod wav;

pub use manifest::{label_index, split_dataset, DatasetManifest, ManifestEntry, Split, LABELS, N_CLASSES};
pub use resample::resample;
pub use wav::{load_wav, save_wav};

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

/// Sample rate every clip is brought to before feature extraction.
pub const TARGET_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("{path}: only integer PCM is supported (got {format})")]
    NotPcm { path: PathBuf, format: String },
    #[error("{path}: file contains no audio frames")]
    Empty { path: PathBuf },
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("train_count {train_count} out of range for {entries} entries")]
    SplitRange { train_count: usize, entries: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono audio signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::InvalidWaveform("waveform must contain at least one sample".into()));
        }
        if sample_rate == 0 {
            return Err(AudioError::InvalidWaveform("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::InvalidWaveform(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Returns `self + delta` at the same sample rate. No clipping is applied.
    pub fn perturbed(&self, delta: &[f64]) -> Result<Self, AudioError> {
        if delta.len() != self.samples.len() {
            return Err(AudioError::InvalidWaveform(format!(
                "perturbation length {} != waveform length {}",
                delta.len(),
                self.samples.len()
            )));
        }
        let samples = self.samples.iter().zip(delta).map(|(x, d)| x + d).collect();
        Self::new(samples, self.sample_rate)
    }
}
