//! Twelve synthetic "instruments" built from simple timbre recipes, used as a desk-scale dataset.

use advaudio_core::attack::derive_seed;
use advaudio_core::audio::{save_wav, DatasetManifest, ManifestEntry, Waveform, LABELS, N_CLASSES, TARGET_SAMPLE_RATE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::TAU;
use std::path::Path;

const SR: f64 = TARGET_SAMPLE_RATE as f64;
const NYQ_GUARD: f64 = 7800.0;

/// Sum of partials `(ratio, amp, decay_per_sec)` over a time-varying fundamental.
fn partials(n: usize, f0: impl Fn(f64) -> f64, parts: &[(f64, f64, f64)]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let mut phase = 0.0;
    let mut gain: Vec<f64> = parts.iter().map(|p| p.1).collect();
    let step: Vec<f64> = parts.iter().map(|p| (-p.2 / SR).exp()).collect();
    for (i, o) in out.iter_mut().enumerate() {
        let f = f0(i as f64 / SR);
        phase += TAU * f / SR;
        let mut s = 0.0;
        for (k, &(r, _, _)) in parts.iter().enumerate() {
            if r * f < NYQ_GUARD && gain[k] > 1e-6 {
                s += gain[k] * (r * phase).sin();
            }
            gain[k] *= step[k];
        }
        *o = s;
    }
    out
}

fn attack_release(n: usize, attack: f64, release: f64) -> impl Fn(usize) -> f64 {
    move |i| {
        let t = i as f64 / SR;
        let rest = (n - i) as f64 / SR;
        (t / attack).min(1.0) * (rest / release).min(1.0)
    }
}

/// Add `note` into `out` starting at sample `at`.
fn mix_at(out: &mut [f64], at: usize, note: &[f64]) {
    for (o, v) in out[at..].iter_mut().zip(note) {
        *o += v;
    }
}

/// Onset times (in samples) with gaps drawn from `gap` seconds.
fn onsets(n: usize, gap: (f64, f64), rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut t = rng.gen_range(0.0..0.05);
    let mut v = Vec::new();
    while ((t * SR) as usize) < n {
        v.push((t * SR) as usize);
        t += rng.gen_range(gap.0..gap.1);
    }
    v
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Formant weight for a harmonic at `f` Hz.
fn formant_gain(f: f64, formants: &[(f64, f64)]) -> f64 {
    formants.iter().map(|&(fc, bw)| (-((f - fc) / bw).powi(2)).exp()).sum::<f64>() + 0.02
}

fn singing(n: usize, f0: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    const VOWELS: [[(f64, f64); 3]; 4] = [
        [(730.0, 90.0), (1090.0, 110.0), (2440.0, 170.0)],
        [(270.0, 60.0), (2290.0, 150.0), (3010.0, 200.0)],
        [(570.0, 80.0), (840.0, 100.0), (2410.0, 170.0)],
        [(300.0, 60.0), (870.0, 100.0), (2240.0, 160.0)],
    ];
    let vowel = VOWELS[rng.gen_range(0..VOWELS.len())];
    let rate = rng.gen_range(4.8..6.5);
    let depth = rng.gen_range(0.01..0.025);
    let parts: Vec<(f64, f64, f64)> = (1..=40).map(|k| (k as f64, formant_gain(k as f64 * f0, &vowel) / k as f64, 0.0)).collect();
    let mut x = partials(n, |t| f0 * (1.0 + depth * (TAU * rate * t).sin()), &parts);
    let env = attack_release(n, 0.12, 0.15);
    for (i, v) in x.iter_mut().enumerate() {
        *v *= env(i);
    }
    x
}

fn pluck(n: usize, f0: f64, n_parts: usize, tilt: f64, base_decay: f64, per_partial: f64) -> Vec<f64> {
    let parts: Vec<(f64, f64, f64)> =
        (1..=n_parts).map(|k| (k as f64, 1.0 / (k as f64).powf(tilt), base_decay + per_partial * k as f64)).collect();
    partials(n, |_| f0, &parts)
}

fn struck(n: usize, f0: f64, ratios: &[(f64, f64)], decay: f64) -> Vec<f64> {
    let parts: Vec<(f64, f64, f64)> = ratios.iter().map(|&(r, a)| (r, a, decay * r.sqrt())).collect();
    partials(n, |_| f0, &parts)
}

fn recipe(class: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; n];
    match class {
        // Accordion: two detuned reeds, tremolo
        0 => {
            let f0 = log_uniform(rng, 150.0, 600.0);
            let beat = rng.gen_range(2.0..5.0);
            let parts: Vec<(f64, f64, f64)> = (1..=18).map(|k| (k as f64, 1.0 / (k as f64).powf(0.7), 0.0)).collect();
            let a = partials(n, |_| f0, &parts);
            let b = partials(n, |_| f0 + beat, &parts);
            let env = attack_release(n, 0.06, 0.1);
            let trem = rng.gen_range(5.0..7.0);
            for i in 0..n {
                let t = i as f64 / SR;
                out[i] = (a[i] + b[i]) * env(i) * (1.0 + 0.15 * (TAU * trem * t).sin());
            }
        }
        // Acoustic guitar: bright decaying plucks
        1 => {
            for at in onsets(n, (0.35, 0.8), rng) {
                let f0 = log_uniform(rng, 82.0, 400.0);
                mix_at(&mut out, at, &pluck(n - at, f0, 24, 1.0, 1.5, 0.9));
            }
        }
        // Bass drum: pitch-swept sine hits with a click
        2 => {
            for at in onsets(n, (0.3, 0.6), rng) {
                let (lo, hi) = (rng.gen_range(40.0..60.0), rng.gen_range(80.0..130.0));
                let len = (n - at).min((0.5 * SR) as usize);
                let mut phase = 0.0;
                let hit: Vec<f64> = (0..len)
                    .map(|i| {
                        let t = i as f64 / SR;
                        phase += TAU * (lo + hi * (-t / 0.03).exp()) / SR;
                        let click = if i < 80 { (i as f64 * 1.7).sin() * (1.0 - i as f64 / 80.0) * 0.3 } else { 0.0 };
                        phase.sin() * (-t / 0.15).exp() + click
                    })
                    .collect();
                mix_at(&mut out, at, &hit);
            }
        }
        // Bass guitar: low plucks with few harmonics
        3 => {
            for at in onsets(n, (0.45, 1.0), rng) {
                let f0 = log_uniform(rng, 41.0, 110.0);
                mix_at(&mut out, at, &pluck(n - at, f0, 8, 1.5, 1.0, 0.4));
            }
        }
        // Electric guitar: saw stack through soft clipping
        4 => {
            let f0 = log_uniform(rng, 110.0, 440.0);
            let drive = rng.gen_range(2.5..5.0);
            let parts: Vec<(f64, f64, f64)> = (1..=30).map(|k| (k as f64, 1.0 / k as f64, 0.0)).collect();
            let x = partials(n, |_| f0, &parts);
            for i in 0..n {
                let t = i as f64 / SR;
                out[i] = (drive * x[i]).tanh() * (-0.4 * t).exp();
            }
        }
        5 => out = singing(n, log_uniform(rng, 200.0, 450.0), rng),
        // Glockenspiel: high inharmonic strikes
        6 => {
            for at in onsets(n, (0.2, 0.5), rng) {
                let f0 = log_uniform(rng, 800.0, 2000.0);
                mix_at(&mut out, at, &struck(n - at, f0, &[(1.0, 1.0), (2.76, 0.4), (5.40, 0.2)], 3.0));
            }
        }
        // Gong: dense low inharmonic cluster, slow decay
        7 => {
            let f0 = log_uniform(rng, 60.0, 200.0);
            let parts: Vec<(f64, f64, f64)> = (0..28)
                .map(|_| {
                    let r: f64 = rng.gen_range(1.0..14.0);
                    (r, 1.0 / r.sqrt(), rng.gen_range(0.3..1.2))
                })
                .collect();
            let x = partials(n, |_| f0, &parts);
            let env = attack_release(n, 0.02, 0.1);
            for i in 0..n {
                out[i] = x[i] * env(i);
            }
        }
        // Harmonica: odd-dominant reed with slow tremolo
        8 => {
            let f0 = log_uniform(rng, 260.0, 1050.0);
            let parts: Vec<(f64, f64, f64)> =
                (1..=14).map(|k| (k as f64, if k % 2 == 1 { 1.0 } else { 0.25 } / k as f64, 0.0)).collect();
            let x = partials(n, |_| f0, &parts);
            let env = attack_release(n, 0.03, 0.08);
            let trem = rng.gen_range(3.0..5.0);
            for i in 0..n {
                let t = i as f64 / SR;
                out[i] = x[i] * env(i) * (1.0 + 0.3 * (TAU * trem * t).sin());
            }
        }
        // Hi-hat: high-passed noise bursts
        9 => {
            let open = rng.gen_bool(0.3);
            let tau = if open { rng.gen_range(0.12..0.25) } else { rng.gen_range(0.02..0.06) };
            for at in onsets(n, (0.12, 0.3), rng) {
                let len = (n - at).min((6.0 * tau * SR) as usize);
                let white: Vec<f64> = (0..len + 2).map(|_| StandardNormal.sample(rng)).collect();
                let burst: Vec<f64> = (0..len)
                    .map(|i| (white[i + 2] - 2.0 * white[i + 1] + white[i]) * 0.25 * (-(i as f64 / SR) / tau).exp())
                    .collect();
                mix_at(&mut out, at, &burst);
            }
        }
        10 => out = singing(n, log_uniform(rng, 90.0, 190.0), rng),
        // Marimba: woody bar partials, quick decay
        11 => {
            for at in onsets(n, (0.15, 0.35), rng) {
                let f0 = log_uniform(rng, 200.0, 1000.0);
                mix_at(&mut out, at, &struck(n - at, f0, &[(1.0, 1.0), (3.9, 0.3), (9.2, 0.1)], 6.0));
            }
        }
        _ => unreachable!("class index checked by caller"),
    }
    out
}

/// One clip of `class`, 1 to 3 s at 16 kHz, with a faint noise floor. Deterministic per `(class, index, seed)`.
pub fn synth_clip(class: usize, index: usize, seed: u64) -> Waveform {
    assert!(class < N_CLASSES);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("{}#{index}", LABELS[class])));
    let n = (rng.gen_range(1.0..3.0) * SR) as usize;
    let mut x = recipe(class, n, &mut rng);
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let gain = rng.gen_range(0.3..0.9) / peak;
    x.iter_mut().for_each(|v| *v *= gain);
    let energy: f64 = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let floor_db = rng.gen_range(35.0..60.0);
    let sigma = (energy / 10f64.powf(floor_db / 10.0)).sqrt();
    for v in x.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += sigma * z;
    }
    Waveform::new(x, TARGET_SAMPLE_RATE).expect("finite synthetic samples")
}

pub fn synth_fname(class: usize, index: usize) -> String {
    format!("{}_{index:03}.wav", LABELS[class])
}

/// Writes `n_per_class` WAVs per label into `dir` plus `manifest.csv`, and returns the manifest.
pub fn make_synthetic_dataset(n_per_class: usize, seed: u64, dir: impl AsRef<Path>) -> anyhow::Result<DatasetManifest> {
    anyhow::ensure!(n_per_class >= 1, "n_per_class must be at least 1");
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(n_per_class * N_CLASSES);
    for class in 0..N_CLASSES {
        for i in 0..n_per_class {
            let fname = synth_fname(class, i);
            save_wav(&synth_clip(class, i, seed), dir.join(&fname))?;
            entries.push(ManifestEntry { fname, label: class });
        }
    }
    let manifest = DatasetManifest { entries };
    manifest.write_csv(dir.join("manifest.csv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clips_are_deterministic_and_in_range() {
        for c in 0..N_CLASSES {
            let a = synth_clip(c, 3, 7);
            assert_eq!(a, synth_clip(c, 3, 7));
            assert_ne!(a, synth_clip(c, 4, 7));
            let secs = a.duration_secs();
            assert!((1.0..=3.0).contains(&secs), "{secs}");
            let peak = a.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(peak > 0.2 && peak < 1.0, "class {c} peak {peak}");
        }
    }
}
