//! Centered, reflect-padded STFT with an analytic adjoint.

use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use std::f64::consts::PI;
use std::sync::Arc;

/// Mirror index into a signal of length `n` (numpy "reflect" mode, applied periodically).
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Periodic Hann window.
pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

#[derive(Clone)]
pub(crate) struct Stft {
    n_fft: usize,
    hop: usize,
    window: Vec<f64>,
    fwd: Arc<dyn RealToComplex<f64>>,
    inv: Arc<dyn ComplexToReal<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("n_fft", &self.n_fft).field("hop", &self.hop).finish()
    }
}

impl Stft {
    pub fn new(n_fft: usize, hop: usize) -> Self {
        let mut planner = RealFftPlanner::<f64>::new();
        Self {
            n_fft,
            hop,
            window: hann(n_fft),
            fwd: planner.plan_fft_forward(n_fft),
            inv: planner.plan_fft_inverse(n_fft),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn n_frames(&self, len: usize) -> usize {
        1 + len / self.hop
    }

    /// Complex spectra, frame-major: `out[f * n_bins + k]`.
    pub fn forward(&self, x: &[f64]) -> Vec<Complex<f64>> {
        let n = x.len();
        let frames = self.n_frames(n);
        let bins = self.n_bins();
        let half = (self.n_fft / 2) as isize;
        let mut out = vec![Complex::new(0.0, 0.0); frames * bins];
        let mut buf = self.fwd.make_input_vec();
        let mut scratch = self.fwd.make_scratch_vec();
        for f in 0..frames {
            let start = (f * self.hop) as isize - half;
            for (j, b) in buf.iter_mut().enumerate() {
                let p = start + j as isize;
                let s = if p >= 0 && (p as usize) < n { x[p as usize] } else { x[reflect_index(p, n)] };
                *b = s * self.window[j];
            }
            self.fwd
                .process_with_scratch(&mut buf, &mut out[f * bins..(f + 1) * bins], &mut scratch)
                .expect("fft buffer sizes are fixed by the plan");
        }
        out
    }

    /// Adjoint of [`Stft::forward`] for real-valued functions of the spectrum.
    ///
    /// `coeff[f * n_bins + k]` is the scalar `c` such that the contribution of bin `k` of
    /// frame `f` to the gradient is `c * Re(X_k * e^{i 2 pi k n / N})` with respect to
    /// sample `n` of the windowed frame. Squared magnitude uses `c = 2 dL/dP`, magnitude
    /// uses `c = (dL/dM) / M`.
    pub fn backward(&self, spec: &[Complex<f64>], coeff: &[f64], len: usize) -> Vec<f64> {
        let bins = self.n_bins();
        let frames = self.n_frames(len);
        debug_assert_eq!(spec.len(), frames * bins);
        debug_assert_eq!(coeff.len(), frames * bins);
        let half = (self.n_fft / 2) as isize;
        let mut grad = vec![0.0; len];
        let mut ybuf = self.inv.make_input_vec();
        let mut frame = self.inv.make_output_vec();
        let mut scratch = self.inv.make_scratch_vec();
        for f in 0..frames {
            let sl = &spec[f * bins..(f + 1) * bins];
            let cl = &coeff[f * bins..(f + 1) * bins];
            if cl.iter().all(|&c| c == 0.0) {
                continue;
            }
            for k in 0..bins {
                let edge = k == 0 || k == bins - 1;
                let w = if edge { cl[k] } else { 0.5 * cl[k] };
                ybuf[k] = sl[k] * w;
            }
            ybuf[0].im = 0.0;
            ybuf[bins - 1].im = 0.0;
            self.inv
                .process_with_scratch(&mut ybuf, &mut frame, &mut scratch)
                .expect("fft buffer sizes are fixed by the plan");
            let start = (f * self.hop) as isize - half;
            for (j, v) in frame.iter().enumerate() {
                let p = start + j as isize;
                let src = if p >= 0 && (p as usize) < len { p as usize } else { reflect_index(p, len) };
                grad[src] += v * self.window[j];
            }
        }
        grad
    }
}
