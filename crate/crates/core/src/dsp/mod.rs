//! Differentiable waveform to normalized log-mel front-end.
//!
//! The forward pass is `|STFT|^2 -> mel -> 10 log10(max(., floor)) -> per-band affine`.
//! [`Frontend::backward`] is its exact adjoint, so classifier gradients can be pulled
//! back onto raw samples.

mod frames;
mod mel;
mod spectral_loss;
mod stft;

pub use frames::{extract_windows, pad_repeat, pad_repeat_sources, window_offsets};
pub use mel::{hz_to_mel, mel_to_hz};
pub use spectral_loss::{multi_scale_spectral_loss, SpectralLoss, SpectralReduction, MAG_FLOOR, SPECTRAL_SCALES};

use crate::audio::Waveform;
use mel::MelFilterbank;
use realfft::num_complex::Complex;
use serde::{Deserialize, Serialize};
use stft::Stft;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FrontendError {
    #[error("invalid front-end config: {0}")]
    Config(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("waveform sample rate {got} differs from front-end rate {expected}")]
    SampleRate { expected: u32, got: u32 },
    #[error("no training clips given")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub db_floor: f64,
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            fft_size: 2048,
            hop: 512,
            n_mels: 100,
            f_min: 40.0,
            f_max: 8000.0,
            db_floor: 1e-10,
            norm_mean: vec![0.0; 100],
            norm_std: vec![1.0; 100],
        }
    }
}

impl FrontendConfig {
    /// Same settings with identity normalization.
    pub fn without_stats(&self) -> Self {
        Self { norm_mean: vec![0.0; self.n_mels], norm_std: vec![1.0; self.n_mels], ..self.clone() }
    }

    pub fn with_stats(&self, mean: Vec<f64>, std: Vec<f64>) -> Self {
        Self { norm_mean: mean, norm_std: std, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), FrontendError> {
        let bad = |m: &str| Err(FrontendError::Config(m.to_string()));
        if self.fft_size < 2 || !self.fft_size.is_multiple_of(2) {
            return bad("fft_size must be even and >= 2");
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return bad("hop must be in 1..=fft_size");
        }
        if self.n_mels == 0 {
            return bad("n_mels must be positive");
        }
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max <= self.sample_rate as f64 / 2.0) {
            return bad("need 0 <= f_min < f_max <= sample_rate/2");
        }
        if !(self.db_floor > 0.0) {
            return bad("db_floor must be positive");
        }
        if self.norm_mean.len() != self.n_mels || self.norm_std.len() != self.n_mels {
            return bad("normalization vectors must have n_mels entries");
        }
        if self.norm_std.iter().any(|s| !(*s > 0.0)) || self.norm_mean.iter().any(|m| !m.is_finite()) {
            return bad("norm_std must be strictly positive and norm_mean finite");
        }
        Ok(())
    }
}

/// Band-major matrix `[n_mels x n_frames]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelSpectrogram {
    n_mels: usize,
    n_frames: usize,
    values: Vec<f64>,
}

impl MelSpectrogram {
    pub fn new(n_mels: usize, n_frames: usize, values: Vec<f64>) -> Result<Self, FrontendError> {
        if values.len() != n_mels * n_frames {
            return Err(FrontendError::Shape {
                expected: format!("{n_mels}x{n_frames}"),
                got: format!("{} values", values.len()),
            });
        }
        Ok(Self { n_mels, n_frames, values })
    }

    pub fn zeros(n_mels: usize, n_frames: usize) -> Self {
        Self { n_mels, n_frames, values: vec![0.0; n_mels * n_frames] }
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, band: usize, frame: usize) -> f64 {
        self.values[band * self.n_frames + frame]
    }

    pub fn frame(&self, frame: usize) -> Vec<f64> {
        (0..self.n_mels).map(|b| self.get(b, frame)).collect()
    }

    /// Frames `start..start + len`.
    pub fn slice_frames(&self, start: usize, len: usize) -> Self {
        let mut values = Vec::with_capacity(self.n_mels * len);
        for b in 0..self.n_mels {
            let row = &self.values[b * self.n_frames..(b + 1) * self.n_frames];
            values.extend_from_slice(&row[start..start + len]);
        }
        Self { n_mels: self.n_mels, n_frames: len, values }
    }
}

/// Intermediates of one forward pass, consumed by [`Frontend::backward`].
#[derive(Debug, Clone)]
pub struct FrontendTape {
    len: usize,
    n_frames: usize,
    spectrum: Vec<Complex<f64>>,
    mel_power: Vec<f64>,
}

impl FrontendTape {
    pub fn input_len(&self) -> usize {
        self.len
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }
}

/// Front-end with precomputed FFT plans and filterbank. Immutable and `Sync`.
#[derive(Debug, Clone)]
pub struct Frontend {
    cfg: FrontendConfig,
    stft: Stft,
    fb: MelFilterbank,
    inv_std: Vec<f64>,
}

impl Frontend {
    pub fn new(cfg: FrontendConfig) -> Result<Self, FrontendError> {
        cfg.validate()?;
        let stft = Stft::new(cfg.fft_size, cfg.hop);
        let fb = MelFilterbank::new(cfg.n_mels, cfg.fft_size, cfg.sample_rate, cfg.f_min, cfg.f_max);
        let inv_std = cfg.norm_std.iter().map(|s| 1.0 / s).collect();
        Ok(Self { cfg, stft, fb, inv_std })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.cfg
    }

    /// Center frequencies of the mel bands in Hz.
    pub fn mel_centers(&self) -> &[f64] {
        &self.fb.centers_hz
    }

    pub fn n_frames(&self, len: usize) -> usize {
        self.stft.n_frames(len)
    }

    fn check_rate(&self, w: &Waveform) -> Result<(), FrontendError> {
        if w.sample_rate() != self.cfg.sample_rate {
            return Err(FrontendError::SampleRate { expected: self.cfg.sample_rate, got: w.sample_rate() });
        }
        Ok(())
    }

    pub fn forward(&self, w: &Waveform) -> Result<(MelSpectrogram, FrontendTape), FrontendError> {
        self.check_rate(w)?;
        Ok(self.forward_samples(w.samples()))
    }

    /// Forward pass on raw samples assumed to be at the configured rate.
    pub fn forward_samples(&self, x: &[f64]) -> (MelSpectrogram, FrontendTape) {
        let spectrum = self.stft.forward(x);
        let n_frames = self.stft.n_frames(x.len());
        let bins = self.stft.n_bins();
        let n_mels = self.cfg.n_mels;
        let mut mel_power = vec![0.0; n_mels * n_frames];
        for f in 0..n_frames {
            let frame = &spectrum[f * bins..(f + 1) * bins];
            for (m, band) in self.fb.bands.iter().enumerate() {
                let s: f64 = band
                    .weights
                    .iter()
                    .zip(&frame[band.start..band.start + band.weights.len()])
                    .map(|(w, c)| w * c.norm_sqr())
                    .sum();
                mel_power[m * n_frames + f] = s;
            }
        }
        let floor = self.cfg.db_floor;
        let values = mel_power
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let m = i / n_frames;
                (10.0 * s.max(floor).log10() - self.cfg.norm_mean[m]) * self.inv_std[m]
            })
            .collect();
        let spec = MelSpectrogram { n_mels, n_frames, values };
        (spec, FrontendTape { len: x.len(), n_frames, spectrum, mel_power })
    }

    /// Gradient of `<grad_out, forward(w)>` with respect to the waveform samples.
    pub fn backward(&self, tape: &FrontendTape, grad_out: &MelSpectrogram) -> Result<Vec<f64>, FrontendError> {
        if grad_out.n_mels != self.cfg.n_mels || grad_out.n_frames != tape.n_frames {
            return Err(FrontendError::Shape {
                expected: format!("{}x{}", self.cfg.n_mels, tape.n_frames),
                got: format!("{}x{}", grad_out.n_mels, grad_out.n_frames),
            });
        }
        let n_frames = tape.n_frames;
        let bins = self.stft.n_bins();
        let floor = self.cfg.db_floor;
        let db_scale = 10.0 / std::f64::consts::LN_10;
        // d out / d mel power, zero where the floor clamp is active
        let g_mel: Vec<f64> = grad_out
            .values
            .iter()
            .zip(&tape.mel_power)
            .enumerate()
            .map(|(i, (&g, &s))| if s > floor { g * self.inv_std[i / n_frames] * db_scale / s } else { 0.0 })
            .collect();
        if g_mel.iter().all(|&g| g == 0.0) {
            return Ok(vec![0.0; tape.len]);
        }
        let mut coeff = vec![0.0; n_frames * bins];
        for (m, band) in self.fb.bands.iter().enumerate() {
            for f in 0..n_frames {
                let g = g_mel[m * n_frames + f];
                if g == 0.0 {
                    continue;
                }
                let row = &mut coeff[f * bins + band.start..f * bins + band.start + band.weights.len()];
                for (c, w) in row.iter_mut().zip(&band.weights) {
                    *c += 2.0 * g * w;
                }
            }
        }
        Ok(self.stft.backward(&tape.spectrum, &coeff, tape.len))
    }
}

/// One-shot forward pass.
pub fn forward_frontend(w: &Waveform, cfg: &FrontendConfig) -> Result<(MelSpectrogram, FrontendTape), FrontendError> {
    Frontend::new(cfg.clone())?.forward(w)
}

/// One-shot backward pass; `cfg` must be the config used for the forward pass.
pub fn backward_frontend(
    tape: &FrontendTape,
    grad_out: &MelSpectrogram,
    cfg: &FrontendConfig,
) -> Result<Vec<f64>, FrontendError> {
    Frontend::new(cfg.clone())?.backward(tape, grad_out)
}

/// Per-band mean and standard deviation of dB values pooled over every frame of every clip.
pub fn fit_normalization(
    train: &[Waveform],
    cfg: &FrontendConfig,
) -> Result<(Vec<f64>, Vec<f64>), FrontendError> {
    if train.is_empty() {
        return Err(FrontendError::EmptyInput);
    }
    let fe = Frontend::new(cfg.without_stats())?;
    let n_mels = cfg.n_mels;
    // Chan et al. pairwise merge of per-clip (count, mean, M2)
    let mut count = 0.0f64;
    let mut mean = vec![0.0; n_mels];
    let mut m2 = vec![0.0; n_mels];
    for w in train {
        let (spec, _) = fe.forward(w)?;
        let nb = spec.n_frames as f64;
        for (b, row) in spec.values.chunks_exact(spec.n_frames).enumerate() {
            let mb = row.iter().sum::<f64>() / nb;
            let m2b: f64 = row.iter().map(|v| (v - mb) * (v - mb)).sum();
            let delta = mb - mean[b];
            let total = count + nb;
            mean[b] += delta * nb / total;
            m2[b] += m2b + delta * delta * count * nb / total;
        }
        count += nb;
    }
    let std = m2.iter().map(|v| (v / count).sqrt().max(1e-8)).collect();
    Ok((mean, std))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sine(freq: f64, n: usize) -> Waveform {
        let s = (0..n).map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin()).collect();
        Waveform::new(s, 16_000).unwrap()
    }

    fn noise(seed: u64, n: usize) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(), 16_000).unwrap()
    }

    #[test]
    fn default_config_is_valid() {
        FrontendConfig::default().validate().unwrap();
        let mut c = FrontendConfig::default();
        c.norm_std[3] = 0.0;
        assert!(c.validate().is_err());
        let c = FrontendConfig { f_max: 9000.0, ..FrontendConfig::default() };
        assert!(c.validate().is_err());
        let c = FrontendConfig { hop: 4096, ..FrontendConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn silence_hits_the_floor_everywhere() {
        let cfg = FrontendConfig::default();
        let w = Waveform::new(vec![0.0; 8000], 16_000).unwrap();
        let (spec, tape) = forward_frontend(&w, &cfg).unwrap();
        assert_eq!(spec.n_frames(), 1 + 8000 / 512);
        assert!(spec.values().iter().all(|&v| v == -100.0));
        let g = backward_frontend(&tape, &MelSpectrogram { values: vec![1.0; spec.values.len()], ..spec }, &cfg).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tone_peaks_in_nearest_mel_band() {
        let fe = Frontend::new(FrontendConfig::default()).unwrap();
        let (spec, _) = fe.forward(&sine(1000.0, 16_000)).unwrap();
        // independent Slaney centers: 1 kHz sits at mel 15 on the linear/log knee
        let (lo, hi) = (40.0 / (200.0 / 3.0), 15.0 + 8.0f64.ln() / (6.4f64.ln() / 27.0));
        let expected = (1..=100)
            .map(|i| lo + (hi - lo) * i as f64 / 101.0)
            .map(|m| if m < 15.0 { m * 200.0 / 3.0 } else { 1000.0 * ((m - 15.0) * 6.4f64.ln() / 27.0).exp() })
            .enumerate()
            .min_by(|a, b| (a.1 - 1000.0).abs().total_cmp(&(b.1 - 1000.0).abs()))
            .unwrap()
            .0;
        for f in 2..spec.n_frames() - 2 {
            let col = spec.frame(f);
            let arg = (0..100).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
            assert_eq!(arg, expected, "frame {f}");
        }
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient() {
        let fe = Frontend::new(FrontendConfig::default()).unwrap();
        let (spec, tape) = fe.forward(&noise(1, 4096)).unwrap();
        let g = fe.backward(&tape, &MelSpectrogram::zeros(100, spec.n_frames())).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(fe.backward(&tape, &MelSpectrogram::zeros(100, spec.n_frames() + 1)).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let fe = Frontend::new(FrontendConfig::default()).unwrap();
        let w = noise(5, 5000);
        assert_eq!(fe.forward(&w).unwrap().0, fe.forward(&w).unwrap().0);
    }

    #[test]
    fn self_normalization_gives_zero_mean_unit_std() {
        let cfg = FrontendConfig::default();
        let w = noise(2, 20_000);
        let (mean, std) = fit_normalization(std::slice::from_ref(&w), &cfg).unwrap();
        let (spec, _) = forward_frontend(&w, &cfg.with_stats(mean.clone(), std.clone())).unwrap();
        for row in spec.values().chunks_exact(spec.n_frames()) {
            let n = row.len() as f64;
            let m = row.iter().sum::<f64>() / n;
            let s = (row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
            assert!(m.abs() < 1e-9 && (s - 1.0).abs() < 1e-9, "m={m} s={s}");
        }
        let (m2, s2) = fit_normalization(&[w.clone(), w], &cfg).unwrap();
        for b in 0..100 {
            assert!((m2[b] - mean[b]).abs() < 1e-9 && (s2[b] - std[b]).abs() < 1e-9);
        }
        assert_eq!(fit_normalization(&[], &cfg), Err(FrontendError::EmptyInput));
    }

    #[test]
    fn normalization_matches_two_pass_oracle() {
        let cfg = FrontendConfig::default();
        let clips: Vec<Waveform> = (0..4).map(|i| noise(10 + i, 3000 + 1700 * i as usize)).collect();
        let (mean, std) = fit_normalization(&clips, &cfg).unwrap();
        let fe = Frontend::new(cfg.without_stats()).unwrap();
        let specs: Vec<MelSpectrogram> = clips.iter().map(|w| fe.forward(w).unwrap().0).collect();
        for b in 0..100 {
            let vals: Vec<f64> = specs.iter().flat_map(|s| (0..s.n_frames()).map(move |f| s.get(b, f))).collect();
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            assert!(((mean[b] - m) / m).abs() < 1e-10);
            assert!(((std[b] - v.sqrt()) / v.sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn sample_rate_mismatch_is_rejected() {
        let fe = Frontend::new(FrontendConfig::default()).unwrap();
        let w = Waveform::new(vec![0.1; 100], 44_100).unwrap();
        assert!(matches!(fe.forward(&w), Err(FrontendError::SampleRate { .. })));
    }
}
