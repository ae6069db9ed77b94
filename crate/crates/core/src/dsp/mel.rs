//! Slaney-scale triangular mel filterbank (peak-normalized, no area normalization).

const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

pub fn hz_to_mel(hz: f64) -> f64 {
    if hz < MIN_LOG_HZ {
        hz / F_SP
    } else {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / log_step()
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel < MIN_LOG_MEL {
        mel * F_SP
    } else {
        MIN_LOG_HZ * ((mel - MIN_LOG_MEL) * log_step()).exp()
    }
}

/// One triangular filter stored sparsely as a contiguous run of FFT bins.
#[derive(Debug, Clone)]
pub(crate) struct MelBand {
    pub start: usize,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct MelFilterbank {
    pub bands: Vec<MelBand>,
    pub centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32, f_min: f64, f_max: f64) -> Self {
        let n_bins = n_fft / 2 + 1;
        let nyquist = sample_rate as f64 / 2.0;
        let bin_hz: Vec<f64> = (0..n_bins).map(|k| nyquist * k as f64 / (n_bins - 1) as f64).collect();
        let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let f_pts: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let mut bands = Vec::with_capacity(n_mels);
        for m in 0..n_mels {
            let (lo, mid, hi) = (f_pts[m], f_pts[m + 1], f_pts[m + 2]);
            let dense: Vec<f64> = bin_hz
                .iter()
                .map(|&f| {
                    let down = (f - lo) / (mid - lo);
                    let up = (hi - f) / (hi - mid);
                    down.min(up).max(0.0)
                })
                .collect();
            let start = dense.iter().position(|&w| w > 0.0).unwrap_or(0);
            let end = dense.iter().rposition(|&w| w > 0.0).map_or(start, |e| e + 1);
            bands.push(MelBand { start, weights: dense[start..end].to_vec() });
        }
        Self { bands, centers_hz: f_pts[1..=n_mels].to_vec() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_scale_round_trips() {
        for hz in [0.0, 40.0, 500.0, 999.0, 1000.0, 4000.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 15.0).abs() < 1e-12);
    }

    #[test]
    fn filters_are_nonnegative_and_inside_band_limits() {
        let fb = MelFilterbank::new(100, 2048, 16_000, 40.0, 8000.0);
        assert_eq!(fb.bands.len(), 100);
        let bin_hz = 8000.0 / 1024.0;
        for b in &fb.bands {
            assert!(b.weights.iter().all(|&w| (0.0..=1.0).contains(&w)));
            let lo = b.start as f64 * bin_hz;
            let hi = (b.start + b.weights.len() - 1) as f64 * bin_hz;
            assert!(lo >= 40.0 && hi <= 8000.0, "{lo}..{hi}");
        }
        assert!(fb.centers_hz.windows(2).all(|w| w[0] < w[1]));
    }
}
