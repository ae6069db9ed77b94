//! Polyphase windowed-sinc resampling with a 64-tap Kaiser window.

use super::Waveform;
use std::f64::consts::PI;

const TAPS: usize = 64;
const HALF: f64 = (TAPS / 2) as f64;
const KAISER_BETA: f64 = 8.6;
/// Fraction of the output Nyquist frequency kept by the anti-alias filter.
const ROLLOFF: f64 = 0.95;
/// Rational phase counts above this are computed per output sample instead of tabulated.
const MAX_TABLE_PHASES: u64 = 4096;

/// Resamples `w` to `target_rate`. Output length is `round(len * target / source)`.
///
/// # Panics
/// Panics if `target_rate` is zero.
pub fn resample(w: &Waveform, target_rate: u32) -> Waveform {
    assert!(target_rate > 0, "target_rate must be positive");
    let src = w.sample_rate() as u64;
    let dst = target_rate as u64;
    if src == dst {
        return w.clone();
    }
    let g = gcd(src, dst);
    let (up, down) = (dst / g, src / g);
    let cutoff = (dst as f64 / src as f64).min(1.0) * ROLLOFF;
    let input = w.samples();
    let out_len = ((input.len() as u128 * dst as u128 + (src as u128 / 2)) / src as u128).max(1) as usize;

    let table = (up <= MAX_TABLE_PHASES)
        .then(|| (0..up).map(|p| phase_filter(p as f64 / up as f64, cutoff)).collect::<Vec<_>>());

    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len as u64 {
        let pos = m * down;
        let base = (pos / up) as i64;
        let phase = pos % up;
        let owned;
        let filt: &[f64; TAPS] = match &table {
            Some(t) => &t[phase as usize],
            None => {
                owned = phase_filter(phase as f64 / up as f64, cutoff);
                &owned
            }
        };
        let mut acc = 0.0;
        for (j, h) in filt.iter().enumerate() {
            let idx = base + j as i64 - (TAPS as i64 / 2 - 1);
            if idx >= 0 && (idx as usize) < input.len() {
                acc += h * input[idx as usize];
            }
        }
        out.push(acc);
    }
    Waveform::new(out, target_rate).expect("resampled signal is finite and non-empty")
}

fn phase_filter(frac: f64, cutoff: f64) -> [f64; TAPS] {
    let mut h = [0.0; TAPS];
    let norm = bessel_i0(KAISER_BETA);
    for (j, v) in h.iter_mut().enumerate() {
        let t = j as f64 - (TAPS as f64 / 2.0 - 1.0) - frac;
        let x = (t / HALF).clamp(-1.0, 1.0);
        let win = bessel_i0(KAISER_BETA * (1.0 - x * x).sqrt()) / norm;
        *v = cutoff * sinc(cutoff * t) * win;
    }
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use realfft::RealFftPlanner;

    fn sine(freq: f64, rate: u32, n: usize) -> Waveform {
        let s = (0..n).map(|i| 0.5 * (2.0 * PI * freq * i as f64 / rate as f64).sin()).collect();
        Waveform::new(s, rate).unwrap()
    }

    fn mean_power(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
    }

    #[test]
    fn identity_when_rates_match() {
        let w = sine(440.0, 16_000, 1000);
        assert_eq!(resample(&w, 16_000), w);
    }

    #[test]
    fn one_second_maps_to_sixteen_thousand_samples() {
        let w = sine(440.0, 44_100, 44_100);
        let r = resample(&w, 16_000);
        assert_eq!(r.len(), 16_000);
        assert_eq!(r.sample_rate(), 16_000);
    }

    #[test]
    fn duration_is_preserved_for_odd_lengths() {
        for n in [1usize, 7, 441, 1000, 12_345] {
            let w = Waveform::new(vec![0.1; n], 44_100).unwrap();
            let r = resample(&w, 16_000);
            let err = (r.len() as f64 / 16_000.0 - n as f64 / 44_100.0).abs();
            assert!(err <= 1.0 / 16_000.0, "n={n}");
        }
    }

    #[test]
    fn kilohertz_tone_survives_downsampling() {
        let w = sine(1000.0, 44_100, 44_100);
        let r = resample(&w, 16_000);
        // 16000-point spectrum has 1 Hz bins.
        let mut buf = r.samples().to_vec();
        let fft = RealFftPlanner::<f64>::new().plan_fft_forward(buf.len());
        let mut spec = fft.make_output_vec();
        fft.process(&mut buf, &mut spec).unwrap();
        let peak = spec
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap()
            .0;
        assert_eq!(peak, 1000);
        let ratio = mean_power(r.samples()) / mean_power(w.samples());
        assert!(ratio > 0.99 && ratio < 1.01, "energy ratio {ratio}");
    }

    #[test]
    fn upsampling_supported() {
        let w = sine(500.0, 16_000, 1600);
        let r = resample(&w, 44_100);
        assert_eq!(r.len(), 4410);
        let ratio = mean_power(&r.samples()[200..4200]) / mean_power(&w.samples()[100..1500]);
        assert!((ratio - 1.0).abs() < 0.01, "ratio {ratio}");
    }
}
