use super::layers::{BatchNorm, Cache, Conv2d, Grad, Layer, Mode};
use super::tensor::Tensor4;
use super::ModelError;
use crate::dsp::MelSpectrogram;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Layer widths and shape limits of the classifier.
///
/// Stack: `conv5x5/2 -> relu -> bn -> avgpool -> conv3x3 -> relu -> bn -> avgpool -> dropout
/// -> conv3x3 -> relu -> bn -> conv3x3 -> relu -> bn -> dropout -> conv1x1 -> global pool`.
/// Padding equals each convolution's stride.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub n_mels: usize,
    pub n_classes: usize,
    pub widths: [usize; 4],
    pub dropout: f64,
    pub min_frames: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { n_mels: 100, n_classes: 12, widths: [64, 128, 256, 256], dropout: 0.3, min_frames: 16 }
    }
}

impl Architecture {
    /// Narrow variant for single-core desk runs; same topology.
    pub fn desk() -> Self {
        Self { widths: [16, 32, 48, 48], ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelMode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class_index: usize,
    pub confidence: f64,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    pub fn from_logits(logits: &[f64]) -> Self {
        let probabilities = softmax(logits);
        let (class_index, confidence) = probabilities
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, p)| if p > best.1 { (i, p) } else { best });
        Self { class_index, confidence, probabilities }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of `logits` against `target` and its gradient with respect to the logits.
pub fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let mut grad = softmax(logits);
    grad[target] -= 1.0;
    (lse - logits[target], grad)
}

/// Forward caches for one pass, needed by the backward pass.
pub struct NetTape {
    caches: Vec<Cache>,
    pub(crate) input_shape: (usize, usize),
}

pub(crate) struct ParamGrads(pub Vec<Vec<f64>>);

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    arch: Architecture,
    layers: Vec<Layer>,
    mode: ModelMode,
}

impl ClassifierModel {
    /// He-initialized model; deterministic for a given seed.
    pub fn new(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [w1, w2, w3, w4] = arch.widths;
        let mut conv = |in_c: usize, out_c: usize, k: usize, stride: usize| {
            let fan_in = (in_c * k * k) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            Layer::Conv(Conv2d {
                in_c,
                out_c,
                kernel: k,
                stride,
                pad: if k == 1 { 0 } else { stride },
                weight: (0..out_c * in_c * k * k).map(|_| normal.sample(&mut rng)).collect(),
                bias: vec![0.0; out_c],
            })
        };
        let bn = |c: usize| {
            Layer::BatchNorm(BatchNorm {
                c,
                gamma: vec![1.0; c],
                beta: vec![0.0; c],
                running_mean: vec![0.0; c],
                running_var: vec![1.0; c],
            })
        };
        let p = arch.dropout;
        let layers = vec![
            conv(1, w1, 5, 2),
            Layer::Relu,
            bn(w1),
            Layer::AvgPool2,
            conv(w1, w2, 3, 1),
            Layer::Relu,
            bn(w2),
            Layer::AvgPool2,
            Layer::Dropout { rate: p },
            conv(w2, w3, 3, 1),
            Layer::Relu,
            bn(w3),
            conv(w3, w4, 3, 1),
            Layer::Relu,
            bn(w4),
            Layer::Dropout { rate: p },
            conv(w4, arch.n_classes, 1, 1),
            Layer::GlobalPool,
        ];
        Self { arch, layers, mode: ModelMode::Eval }
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn mode(&self) -> ModelMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: ModelMode) {
        self.mode = mode;
    }

    pub fn n_classes(&self) -> usize {
        self.arch.n_classes
    }

    pub fn min_frames(&self) -> usize {
        self.arch.min_frames
    }

    pub fn set_dropout(&mut self, rate: f64) {
        self.arch.dropout = rate;
        for l in &mut self.layers {
            if let Layer::Dropout { rate: r } = l {
                *r = rate;
            }
        }
    }

    /// Mutable views of every trainable tensor, in a fixed order.
    pub(crate) fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Conv(c) => {
                    out.push(&mut c.weight);
                    out.push(&mut c.bias);
                }
                Layer::BatchNorm(b) => {
                    out.push(&mut b.gamma);
                    out.push(&mut b.beta);
                }
                _ => {}
            }
        }
        out
    }

    pub(crate) fn trainable_sizes(&mut self) -> Vec<usize> {
        self.trainable_mut().iter().map(|t| t.len()).collect()
    }

    /// Every persisted tensor (trainable and running statistics) with a stable name.
    pub(crate) fn named_tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            match l {
                Layer::Conv(c) => {
                    out.push((format!("{i}.conv.weight"), c.weight.as_slice()));
                    out.push((format!("{i}.conv.bias"), c.bias.as_slice()));
                }
                Layer::BatchNorm(b) => {
                    out.push((format!("{i}.bn.gamma"), b.gamma.as_slice()));
                    out.push((format!("{i}.bn.beta"), b.beta.as_slice()));
                    out.push((format!("{i}.bn.running_mean"), b.running_mean.as_slice()));
                    out.push((format!("{i}.bn.running_var"), b.running_var.as_slice()));
                }
                _ => {}
            }
        }
        out
    }

    pub(crate) fn named_tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Conv(c) => {
                    out.push(&mut c.weight);
                    out.push(&mut c.bias);
                }
                Layer::BatchNorm(b) => {
                    out.push(&mut b.gamma);
                    out.push(&mut b.beta);
                    out.push(&mut b.running_mean);
                    out.push(&mut b.running_var);
                }
                _ => {}
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, t) in self.named_tensors() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::Invalid(format!("{name} has non-finite values")));
            }
        }
        for l in &self.layers {
            if let Layer::BatchNorm(b) = l {
                if b.running_var.iter().any(|v| !(*v > 0.0)) {
                    return Err(ModelError::Invalid("batch-norm running variance must be positive".into()));
                }
            }
        }
        Ok(())
    }

    fn check_input(&self, spec: &MelSpectrogram) -> Result<(), ModelError> {
        if spec.n_mels() != self.arch.n_mels {
            return Err(ModelError::Shape(format!("expected {} mel bands, got {}", self.arch.n_mels, spec.n_mels())));
        }
        if spec.n_frames() < self.arch.min_frames {
            return Err(ModelError::TooFewFrames { got: spec.n_frames(), min: self.arch.min_frames });
        }
        Ok(())
    }

    /// Eval-mode forward pass on one spectrogram. Returns the logits and a tape for [`Self::backward`].
    pub fn forward(&self, spec: &MelSpectrogram) -> Result<(Vec<f64>, NetTape), ModelError> {
        self.check_input(spec)?;
        let x = Tensor4::from_vec(1, 1, spec.n_mels(), spec.n_frames(), spec.values().to_vec());
        let (out, caches) = self.run(x, &mut Mode::Eval);
        Ok((out.data, NetTape { caches, input_shape: (spec.n_mels(), spec.n_frames()) }))
    }

    /// Gradient of `<grad_logits, logits>` with respect to the input spectrogram.
    pub fn backward(&self, tape: &NetTape, grad_logits: &[f64]) -> Result<MelSpectrogram, ModelError> {
        if grad_logits.len() != self.arch.n_classes {
            return Err(ModelError::Shape(format!("expected {} logit gradients", self.arch.n_classes)));
        }
        let dy = Tensor4::from_vec(1, self.arch.n_classes, 1, 1, grad_logits.to_vec());
        let (dx, _) = self.backprop(&tape.caches, dy, true);
        let (m, t) = tape.input_shape;
        Ok(MelSpectrogram::new(m, t, dx.expect("input gradient requested").data).expect("tape shape"))
    }

    fn run(&self, mut x: Tensor4, mode: &mut Mode<'_>) -> (Tensor4, Vec<Cache>) {
        let mut caches = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (y, c) = l.forward(x, mode);
            caches.push(c);
            x = y;
        }
        (x, caches)
    }

    fn backprop(&self, caches: &[Cache], mut dy: Tensor4, need_input: bool) -> (Option<Tensor4>, ParamGrads) {
        let mut grads: Vec<Vec<f64>> = Vec::new();
        for (i, (l, c)) in self.layers.iter().zip(caches).enumerate().rev() {
            let need_dx = i > 0 || need_input;
            let (dx, g) = l.backward(c, dy, need_dx);
            match g {
                Grad::Conv { dw, db } => {
                    grads.push(db);
                    grads.push(dw);
                }
                Grad::BatchNorm { dgamma, dbeta } => {
                    grads.push(dbeta);
                    grads.push(dgamma);
                }
                Grad::None => {}
            }
            match dx {
                Some(d) => dy = d,
                None => {
                    grads.reverse();
                    return (None, ParamGrads(grads));
                }
            }
        }
        grads.reverse();
        (Some(dy), ParamGrads(grads))
    }

    /// Training-mode forward on a batch `[N, 1, n_mels, T]`; returns `[N * n_classes]` logits.
    pub(crate) fn forward_train(&self, batch: Tensor4, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<Cache>) {
        let (out, caches) = self.run(batch, &mut Mode::Train(rng));
        (out.data, caches)
    }

    pub(crate) fn backward_train(&self, caches: &[Cache], grad_logits: Vec<f64>, n: usize) -> ParamGrads {
        let dy = Tensor4::from_vec(n, self.arch.n_classes, 1, 1, grad_logits);
        self.backprop(caches, dy, false).1
    }

    /// Folds batch statistics recorded in `caches` into the running averages.
    pub(crate) fn update_running_stats(&mut self, caches: &[Cache], batch: usize) {
        for (l, c) in self.layers.iter_mut().zip(caches) {
            if let (Layer::BatchNorm(bn), Cache::BatchNorm { batch_mean, batch_var, train: true, xhat, .. }) = (l, c) {
                bn.update_running(batch_mean, batch_var, batch * xhat.plane());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny() -> Architecture {
        Architecture { widths: [3, 4, 5, 5], ..Architecture::default() }
    }

    fn random_spec(seed: u64, frames: usize) -> MelSpectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MelSpectrogram::new(100, frames, (0..100 * frames).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn random_model_gives_finite_logits_deterministically() {
        let m = ClassifierModel::new(tiny(), 0);
        let s = random_spec(1, 40);
        let (a, _) = m.forward(&s).unwrap();
        let (b, _) = m.forward(&s).unwrap();
        assert_eq!(a.len(), 12);
        assert!(a.iter().all(|v| v.is_finite()));
        assert_eq!(a, b);
    }

    #[test]
    fn minimum_length_is_enforced() {
        let m = ClassifierModel::new(tiny(), 0);
        assert!(matches!(m.forward(&random_spec(1, 15)), Err(ModelError::TooFewFrames { .. })));
        assert!(m.forward(&random_spec(1, 16)).is_ok());
    }

    #[test]
    fn biased_head_forces_prediction() {
        let mut m = ClassifierModel::new(tiny(), 0);
        if let Some(Layer::Conv(head)) = m.layers_mut().iter_mut().rev().find(|l| matches!(l, Layer::Conv(_))) {
            head.bias[7] = 1e3;
        }
        for seed in 0..5 {
            let (logits, _) = m.forward(&random_spec(seed, 30 + seed as usize)).unwrap();
            assert_eq!(Prediction::from_logits(&logits).class_index, 7);
        }
    }

    #[test]
    fn softmax_and_cross_entropy() {
        let p = softmax(&[1.0, 2.0, 3.0, -1.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let (l, g) = cross_entropy(&[0.0; 12], 3);
        assert!((l - 12f64.ln()).abs() < 1e-12);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
        let pred = Prediction::from_logits(&[0.1, 5.0, -1.0]);
        assert_eq!(pred.class_index, 1);
        assert_eq!(pred.confidence, pred.probabilities[1]);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut m = ClassifierModel::new(tiny(), 3);
        // non-trivial running statistics
        for l in m.layers_mut() {
            if let Layer::BatchNorm(b) = l {
                b.running_mean.iter_mut().for_each(|v| *v = 0.1);
                b.running_var.iter_mut().for_each(|v| *v = 0.8);
            }
        }
        let s = random_spec(4, 24);
        let (logits, tape) = m.forward(&s).unwrap();
        let (_, g_logits) = cross_entropy(&logits, 2);
        let g = m.backward(&tape, &g_logits).unwrap();
        let loss = |s: &MelSpectrogram| cross_entropy(&m.forward(s).unwrap().0, 2).0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dir: Vec<f64> = (0..s.values().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = 1e-5;
        let shift = |sign: f64| {
            let v = s.values().iter().zip(&dir).map(|(a, d)| a + sign * h * d).collect();
            MelSpectrogram::new(100, 24, v).unwrap()
        };
        let fd = (loss(&shift(1.0)) - loss(&shift(-1.0))) / (2.0 * h);
        let an: f64 = g.values().iter().zip(&dir).map(|(a, b)| a * b).sum();
        assert!((fd - an).abs() / an.abs().max(1e-8) < 1e-4, "fd {fd} analytic {an}");
    }
}
