use super::inference::{evaluate, LabeledClip};
use super::network::{cross_entropy, ClassifierModel, ModelMode};
use super::tensor::Tensor4;
use super::ModelError;
use crate::dsp::{extract_windows, Frontend, FrontendConfig, MelSpectrogram};
use crate::optim::{Adam, AdamParams};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub decay_epoch: usize,
    pub decay_factor: f64,
    pub seed: u64,
    pub dropout_rate: f64,
    pub window_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 150,
            batch_size: 16,
            decay_epoch: 90,
            decay_factor: 0.1,
            seed: 0,
            dropout_rate: 0.3,
            window_len: 116,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.into()));
        if !(self.learning_rate > 0.0 && self.decay_factor > 0.0) {
            return bad("learning rate and decay factor must be positive");
        }
        if self.epochs < self.decay_epoch {
            return bad("epochs must be >= decay_epoch");
        }
        if self.batch_size == 0 || self.window_len == 0 {
            return bad("batch_size and window_len must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch >= self.decay_epoch {
            self.learning_rate * self.decay_factor
        } else {
            self.learning_rate
        }
    }
}

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_accuracy: Option<f64>,
}

pub fn fit(
    model: ClassifierModel,
    train: &[LabeledClip],
    cfg: &TrainConfig,
    frontend: &FrontendConfig,
) -> Result<(ClassifierModel, Vec<EpochLog>), ModelError> {
    fit_with_callback(model, train, None, cfg, frontend, |_| {})
}

/// Trains on repeat-padded / randomly windowed spectrograms and returns the eval-mode model.
/// `frontend` must already carry normalization statistics fitted on `train`.
pub fn fit_with_callback(
    mut model: ClassifierModel,
    train: &[LabeledClip],
    validation: Option<&[LabeledClip]>,
    cfg: &TrainConfig,
    frontend: &FrontendConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(ClassifierModel, Vec<EpochLog>), ModelError> {
    if train.is_empty() {
        return Err(ModelError::Empty("training set"));
    }
    cfg.validate()?;
    let n_classes = model.n_classes();
    if let Some(c) = train.iter().find(|c| c.label >= n_classes) {
        return Err(ModelError::ClassIndex(c.label));
    }
    let fe = Frontend::new(frontend.clone())?;
    let windows: Vec<Vec<MelSpectrogram>> = train
        .iter()
        .map(|c| fe.forward(&c.waveform).map(|(s, _)| extract_windows(&s, cfg.window_len)))
        .collect::<Result<_, _>>()?;
    let n_mels = frontend.n_mels;

    model.set_dropout(cfg.dropout_rate);
    model.set_mode(ModelMode::Train);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(AdamParams::with_lr(cfg.learning_rate), &model.trainable_sizes());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        opt.params.lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let n = chunk.len();
            let mut data = Vec::with_capacity(n * n_mels * cfg.window_len);
            for &i in chunk {
                let ws = &windows[i];
                let pick = rng.gen_range(0..ws.len());
                data.extend_from_slice(ws[pick].values());
            }
            let batch = Tensor4::from_vec(n, 1, n_mels, cfg.window_len, data);
            let (logits, caches) = model.forward_train(batch, &mut rng);
            let mut grad = Vec::with_capacity(logits.len());
            let mut batch_loss = 0.0;
            for (k, &i) in chunk.iter().enumerate() {
                let row = &logits[k * n_classes..(k + 1) * n_classes];
                let (l, g) = cross_entropy(row, train[i].label);
                batch_loss += l;
                grad.extend(g.into_iter().map(|v| v / n as f64));
                let arg = (0..n_classes).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
                correct += usize::from(arg == train[i].label);
            }
            if !batch_loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += batch_loss;
            let grads = model.backward_train(&caches, grad, n);
            model.update_running_stats(&caches, n);
            let grad_refs: Vec<&[f64]> = grads.0.iter().map(Vec::as_slice).collect();
            opt.step(&mut model.trainable_mut(), &grad_refs);
        }
        let val_accuracy = match validation {
            Some(v) if !v.is_empty() => {
                model.set_mode(ModelMode::Eval);
                let acc = evaluate(&model, v, frontend)?.accuracy;
                model.set_mode(ModelMode::Train);
                Some(acc)
            }
            _ => None,
        };
        let entry = EpochLog {
            epoch,
            learning_rate: opt.params.lr,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_accuracy,
        };
        on_epoch(&entry);
        log.push(entry);
    }
    model.set_mode(ModelMode::Eval);
    model.validate()?;
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learning_rate_decays_once() {
        let c = TrainConfig::default();
        assert_eq!(c.lr_at(0), 0.001);
        assert_eq!(c.lr_at(89), 0.001);
        assert!((c.lr_at(90) - 0.0001).abs() < 1e-18);
        assert!((c.lr_at(149) - 0.0001).abs() < 1e-18);
    }

    #[test]
    fn config_validation() {
        TrainConfig::default().validate().unwrap();
        assert!(TrainConfig { epochs: 10, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let m = ClassifierModel::new(super::super::Architecture { widths: [2, 2, 2, 2], ..Default::default() }, 0);
        assert!(matches!(fit(m, &[], &TrainConfig::default(), &FrontendConfig::default()), Err(ModelError::Empty(_))));
    }
}
