use crate::synth::{synth_clip, synth_fname};
use advaudio_core::audio::{load_wav, resample, DatasetManifest, Split, N_CLASSES, TARGET_SAMPLE_RATE};
use advaudio_core::model::LabeledClip;
use anyhow::Context;
use std::path::Path;

fn clip_id(fname: &str) -> String {
    Path::new(fname).file_stem().map_or_else(|| fname.to_string(), |s| s.to_string_lossy().into_owned())
}

/// Loads the manifest rows at `indices` (all rows if `None`), resampled to 16 kHz.
pub fn load_clips(manifest: &DatasetManifest, audio_dir: &Path, indices: Option<&[usize]>) -> anyhow::Result<Vec<LabeledClip>> {
    let all: Vec<usize>;
    let idx = match indices {
        Some(i) => i,
        None => {
            all = (0..manifest.len()).collect();
            &all
        }
    };
    idx.iter()
        .map(|&i| {
            let e = manifest.entries.get(i).with_context(|| format!("manifest has no row {i}"))?;
            let path = audio_dir.join(&e.fname);
            let w = load_wav(&path).with_context(|| format!("loading {}", path.display()))?;
            Ok(LabeledClip { id: clip_id(&e.fname), waveform: resample(&w, TARGET_SAMPLE_RATE), label: e.label })
        })
        .collect()
}

pub fn split_clips(manifest: &DatasetManifest, audio_dir: &Path, split: &Split) -> anyhow::Result<(Vec<LabeledClip>, Vec<LabeledClip>)> {
    Ok((load_clips(manifest, audio_dir, Some(&split.train))?, load_clips(manifest, audio_dir, Some(&split.validation))?))
}

/// In-memory synthetic clips, class-major, ids matching [`crate::synth::make_synthetic_dataset`] file stems.
pub fn synthetic_clips(n_per_class: usize, seed: u64) -> Vec<LabeledClip> {
    (0..N_CLASSES)
        .flat_map(|c| (0..n_per_class).map(move |i| (c, i)))
        .map(|(c, i)| LabeledClip { id: clip_id(&synth_fname(c, i)), waveform: synth_clip(c, i, seed), label: c })
        .collect()
}
