//! Multi-scale magnitude + log-magnitude L1 spectral distance with analytic gradient.

use super::stft::Stft;
use super::FrontendError;
use serde::{Deserialize, Serialize};

pub const SPECTRAL_SCALES: [usize; 6] = [2048, 1024, 512, 256, 128, 64];
/// Magnitudes are clamped below at this value before taking logs.
pub const MAG_FLOOR: f64 = 1e-5;

/// How each scale's absolute differences are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralReduction {
    /// Plain L1 norms.
    #[default]
    Sum,
    /// L1 norms divided by the number of STFT cells of the scale.
    Mean,
}

#[derive(Debug, Clone)]
struct Scale {
    stft: Stft,
    ref_mag: Vec<f64>,
    ref_log: Vec<f64>,
    weight: f64,
}

/// Spectral distance to a fixed reference signal.
#[derive(Debug, Clone)]
pub struct SpectralLoss {
    len: usize,
    scales: Vec<Scale>,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl SpectralLoss {
    pub fn new(reference: &[f64]) -> Self {
        Self::with_scales(reference, &SPECTRAL_SCALES, SpectralReduction::Sum)
    }

    pub fn with_reduction(reference: &[f64], reduction: SpectralReduction) -> Self {
        Self::with_scales(reference, &SPECTRAL_SCALES, reduction)
    }

    pub fn with_scales(reference: &[f64], sizes: &[usize], reduction: SpectralReduction) -> Self {
        let scales = sizes
            .iter()
            .map(|&n| {
                let stft = Stft::new(n, n / 4);
                let ref_mag: Vec<f64> = stft.forward(reference).iter().map(|c| c.norm()).collect();
                let ref_log = ref_mag.iter().map(|m| m.max(MAG_FLOOR).ln()).collect();
                let weight = match reduction {
                    SpectralReduction::Sum => 1.0,
                    SpectralReduction::Mean => 1.0 / ref_mag.len() as f64,
                };
                Scale { stft, ref_mag, ref_log, weight }
            })
            .collect();
        Self { len: reference.len(), scales }
    }

    pub fn loss(&self, x: &[f64]) -> Result<f64, FrontendError> {
        self.check(x)?;
        let mut total = 0.0;
        for s in &self.scales {
            let mut part = 0.0;
            for ((c, rm), rl) in s.stft.forward(x).iter().zip(&s.ref_mag).zip(&s.ref_log) {
                let m = c.norm();
                part += (rm - m).abs() + (rl - m.max(MAG_FLOOR).ln()).abs();
            }
            total += s.weight * part;
        }
        Ok(total)
    }

    /// Loss and its gradient with respect to `x`.
    pub fn loss_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>), FrontendError> {
        self.check(x)?;
        let mut total = 0.0;
        let mut grad = vec![0.0; x.len()];
        for s in &self.scales {
            let spec = s.stft.forward(x);
            let mut coeff = vec![0.0; spec.len()];
            let mut part = 0.0;
            for (i, c) in spec.iter().enumerate() {
                let m = c.norm();
                let lm = m.max(MAG_FLOOR).ln();
                let d_mag = m - s.ref_mag[i];
                let d_log = lm - s.ref_log[i];
                part += d_mag.abs() + d_log.abs();
                // d/dM; log term only flows where the floor is inactive
                let mut g = sign(d_mag);
                if m > MAG_FLOOR {
                    g += sign(d_log) / m;
                }
                if m > 0.0 {
                    coeff[i] = s.weight * g / m;
                }
            }
            total += s.weight * part;
            for (a, b) in grad.iter_mut().zip(s.stft.backward(&spec, &coeff, x.len())) {
                *a += b;
            }
        }
        Ok((total, grad))
    }

    fn check(&self, x: &[f64]) -> Result<(), FrontendError> {
        if x.len() != self.len {
            return Err(FrontendError::Shape { expected: format!("{} samples", self.len), got: format!("{}", x.len()) });
        }
        Ok(())
    }
}

/// `L(x, x_adv)` and its gradient with respect to `x_adv`.
pub fn multi_scale_spectral_loss(x: &[f64], x_adv: &[f64]) -> Result<(f64, Vec<f64>), FrontendError> {
    SpectralLoss::new(x).loss_and_grad(x_adv)
}
