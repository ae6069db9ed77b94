use super::{AudioError, Waveform};
use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use std::path::Path;

/// Reads an integer-PCM WAV file, averaging all channels down to mono.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform, AudioError> {
    let path = path.as_ref();
    let read_err = |source| AudioError::Read { path: path.to_path_buf(), source };
    let reader = WavReader::open(path).map_err(read_err)?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int {
        return Err(AudioError::NotPcm {
            path: path.to_path_buf(),
            format: format!("{:?} {}-bit", spec.sample_format, spec.bits_per_sample),
        });
    }
    let channels = spec.channels.max(1) as usize;
    let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
    let raw = reader
        .into_samples::<i32>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(read_err)?;
    let frames = raw.len() / channels;
    if frames == 0 {
        return Err(AudioError::Empty { path: path.to_path_buf() });
    }
    let samples = raw
        .chunks_exact(channels)
        .map(|frame| frame.iter().map(|&s| s as f64 * scale).sum::<f64>() / channels as f64)
        .collect();
    Waveform::new(samples, spec.sample_rate)
}

/// Writes a 16-bit mono PCM file. Samples are clipped to [-1, 1] first.
pub fn save_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let path = path.as_ref();
    let write_err = |source| AudioError::Write { path: path.to_path_buf(), source };
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(write_err)?;
    for &s in w.samples() {
        writer.write_sample(quantize_i16(s)).map_err(write_err)?;
    }
    writer.finalize().map_err(write_err)
}

fn quantize_i16(s: f64) -> i16 {
    (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}
