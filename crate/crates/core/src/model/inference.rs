//! The attacked system: front-end followed by the CNN, evaluated on full-length clips.

use super::network::{cross_entropy, ClassifierModel, ModelMode, Prediction};
use super::ModelError;
use crate::audio::Waveform;
use crate::dsp::{pad_repeat, pad_repeat_sources, Frontend, FrontendConfig, MelSpectrogram};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip {
    pub id: String,
    pub waveform: Waveform,
    pub label: usize,
}

/// Class whose cross-entropy is differentiated: the true label (untargeted) or a target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossTarget {
    Label(usize),
    Target(usize),
}

impl LossTarget {
    pub fn class(self) -> usize {
        match self {
            LossTarget::Label(c) | LossTarget::Target(c) => c,
        }
    }
}

/// Front-end plus frozen eval-mode model. Immutable; share it across threads freely.
#[derive(Debug, Clone)]
pub struct Classifier {
    model: ClassifierModel,
    frontend: Frontend,
}

/// Output of one combined forward/backward evaluation.
#[derive(Debug, Clone)]
pub struct SystemOutput {
    pub logits: Vec<f64>,
    pub loss: f64,
    pub input_grad: Option<Vec<f64>>,
}

impl Classifier {
    pub fn new(model: ClassifierModel, cfg: FrontendConfig) -> Result<Self, ModelError> {
        if model.mode() != ModelMode::Eval {
            return Err(ModelError::NotEval);
        }
        model.validate()?;
        if cfg.n_mels != model.architecture().n_mels {
            return Err(ModelError::Shape("front-end n_mels differs from model input".into()));
        }
        Ok(Self { model, frontend: Frontend::new(cfg)? })
    }

    pub fn model(&self) -> &ClassifierModel {
        &self.model
    }

    pub fn frontend(&self) -> &Frontend {
        &self.frontend
    }

    pub fn n_classes(&self) -> usize {
        self.model.n_classes()
    }

    /// Full-length spectrogram, repeat-padded up to the model's minimum length.
    pub fn spectrogram(&self, x: &[f64]) -> MelSpectrogram {
        pad_repeat(&self.frontend.forward_samples(x).0, self.model.min_frames())
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        Ok(self.model.forward(&self.spectrogram(x))?.0)
    }

    pub fn predict_samples(&self, x: &[f64]) -> Result<Prediction, ModelError> {
        Ok(Prediction::from_logits(&self.logits(x)?))
    }

    pub fn predict(&self, w: &Waveform) -> Result<Prediction, ModelError> {
        self.check_rate(w)?;
        self.predict_samples(w.samples())
    }

    fn check_rate(&self, w: &Waveform) -> Result<(), ModelError> {
        if w.sample_rate() != self.frontend.config().sample_rate {
            return Err(crate::dsp::FrontendError::SampleRate {
                expected: self.frontend.config().sample_rate,
                got: w.sample_rate(),
            }
            .into());
        }
        Ok(())
    }

    /// Logits, cross-entropy against `target`, and optionally d(loss)/d(samples).
    pub fn evaluate_samples(&self, x: &[f64], target: LossTarget, with_grad: bool) -> Result<SystemOutput, ModelError> {
        let class = target.class();
        if class >= self.n_classes() {
            return Err(ModelError::ClassIndex(class));
        }
        let (raw, fe_tape) = self.frontend.forward_samples(x);
        let n_raw = raw.n_frames();
        let min = self.model.min_frames();
        let padded = pad_repeat(&raw, min);
        let (logits, tape) = self.model.forward(&padded)?;
        let (loss, g_logits) = cross_entropy(&logits, class);
        let input_grad = if with_grad {
            let g_spec = self.model.backward(&tape, &g_logits)?;
            let g_raw = if padded.n_frames() == n_raw {
                g_spec
            } else {
                // adjoint of the repeat padding: accumulate onto source frames
                let src = pad_repeat_sources(n_raw, min);
                let n_mels = g_spec.n_mels();
                let mut acc = MelSpectrogram::zeros(n_mels, n_raw);
                let gv = g_spec.values();
                let av = acc.values_mut();
                for b in 0..n_mels {
                    for (j, &s) in src.iter().enumerate() {
                        av[b * n_raw + s] += gv[b * src.len() + j];
                    }
                }
                acc
            };
            Some(self.frontend.backward(&fe_tape, &g_raw)?)
        } else {
            None
        };
        Ok(SystemOutput { logits, loss, input_grad })
    }
}

pub fn predict(model: &ClassifierModel, w: &Waveform, cfg: &FrontendConfig) -> Result<Prediction, ModelError> {
    Classifier::new(model.clone(), cfg.clone())?.predict(w)
}

/// d L_net(f(w), class) / d w with cross-entropy loss.
pub fn input_gradient(
    model: &ClassifierModel,
    w: &Waveform,
    cfg: &FrontendConfig,
    target: LossTarget,
) -> Result<Vec<f64>, ModelError> {
    let c = Classifier::new(model.clone(), cfg.clone())?;
    c.check_rate(w)?;
    Ok(c.evaluate_samples(w.samples(), target, true)?.input_grad.expect("requested"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub mean_confidence: f64,
    pub predictions: Vec<Prediction>,
}

impl EvalReport {
    pub fn from_predictions(predictions: Vec<Prediction>, labels: &[usize]) -> Result<Self, ModelError> {
        if predictions.is_empty() {
            return Err(ModelError::Empty("dataset"));
        }
        let n = predictions.len() as f64;
        let correct = predictions.iter().zip(labels).filter(|(p, &l)| p.class_index == l).count();
        let mean_confidence = predictions.iter().map(|p| p.confidence).sum::<f64>() / n;
        Ok(Self { accuracy: correct as f64 / n, mean_confidence, predictions })
    }
}

pub fn evaluate(model: &ClassifierModel, data: &[LabeledClip], cfg: &FrontendConfig) -> Result<EvalReport, ModelError> {
    if data.is_empty() {
        return Err(ModelError::Empty("dataset"));
    }
    let c = Classifier::new(model.clone(), cfg.clone())?;
    let preds = data.iter().map(|d| c.predict(&d.waveform)).collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<usize> = data.iter().map(|d| d.label).collect();
    EvalReport::from_predictions(preds, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::layers::Layer;
    use crate::model::Architecture;

    fn pred(c: usize) -> Prediction {
        let mut logits = vec![0.0; 12];
        logits[c] = 5.0;
        Prediction::from_logits(&logits)
    }

    #[test]
    fn accuracy_counts() {
        let labels: Vec<usize> = (0..10).collect();
        let preds: Vec<Prediction> = (0..10).map(|i| pred(if i < 7 { i } else { (i + 1) % 12 })).collect();
        assert!((EvalReport::from_predictions(preds, &labels).unwrap().accuracy - 0.7).abs() < 1e-12);
        let perfect: Vec<Prediction> = labels.iter().map(|&l| pred(l)).collect();
        assert_eq!(EvalReport::from_predictions(perfect, &labels).unwrap().accuracy, 1.0);
        assert!(EvalReport::from_predictions(vec![], &[]).is_err());
    }

    #[test]
    fn constant_gong_predictor_scores_majority_share() {
        // 200 clips with 25 'Gong' (index 7)
        let labels: Vec<usize> = (0..200).map(|i| if i < 25 { 7 } else { [0, 1, 2, 3, 4, 5, 6, 8, 9, 10, 11][i % 11] }).collect();
        let preds = vec![pred(7); 200];
        assert_eq!(EvalReport::from_predictions(preds, &labels).unwrap().accuracy, 0.125);
    }

    #[test]
    fn silent_clip_has_zero_input_gradient() {
        let m = ClassifierModel::new(Architecture { widths: [2, 2, 2, 2], ..Architecture::default() }, 0);
        let w = Waveform::new(vec![0.0; 4096], 16_000).unwrap();
        let g = input_gradient(&m, &w, &FrontendConfig::default(), LossTarget::Label(3)).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn train_mode_models_are_rejected() {
        let mut m = ClassifierModel::new(Architecture { widths: [2, 2, 2, 2], ..Architecture::default() }, 0);
        m.set_mode(ModelMode::Train);
        assert!(matches!(Classifier::new(m, FrontendConfig::default()), Err(ModelError::NotEval)));
    }

    #[test]
    fn short_clips_are_padded_before_inference() {
        let mut m = ClassifierModel::new(Architecture { widths: [2, 2, 2, 2], ..Architecture::default() }, 0);
        if let Some(Layer::Conv(head)) = m.layers_mut().iter_mut().rev().find(|l| matches!(l, Layer::Conv(_))) {
            head.bias[4] = 100.0;
        }
        // 1000 samples -> 2 frames, below the 16-frame minimum
        let w = Waveform::new((0..1000).map(|i| (i as f64 * 0.1).sin() * 0.3).collect(), 16_000).unwrap();
        let p = predict(&m, &w, &FrontendConfig::default()).unwrap();
        assert_eq!(p.class_index, 4);
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}
