//! White-box waveform attacks against a frozen [`Classifier`].
//!
//! Every iterative method feeds `sign(grad)` into Adam (step size `eta`) and clips the
//! perturbation to `[-epsilon, epsilon]` after each update. Success is checked before
//! every update on the full-length clip, so `iterations_used` counts applied updates.

mod config;
mod target;

pub use config::{AttackConfig, AttackMethod};
pub use target::{derive_seed, sample_target};

use crate::dsp::{FrontendError, SpectralLoss, SpectralReduction};
use crate::metrics::{snr_db, Snr};
use crate::model::{Classifier, LossTarget, ModelError, Prediction};
use crate::optim::{Adam, AdamParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid attack config: {0}")]
    Config(String),
    #[error("non-finite gradient at iteration {0}")]
    NonFiniteGradient(usize),
    #[error("{method} needs a target class")]
    MissingTarget { method: AttackMethod },
    #[error("class index {0} out of range")]
    ClassIndex(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub method: AttackMethod,
    pub success: bool,
    pub delta: Vec<f64>,
    pub iterations_used: usize,
    /// Only set on success.
    pub snr_db: Option<Snr>,
    pub original_prediction: Prediction,
    pub adversarial_prediction: Prediction,
    pub label: usize,
    pub target: Option<usize>,
}

impl AttackResult {
    pub fn adversarial_samples(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.delta).map(|(a, d)| a + d).collect()
    }
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

fn check_class(clf: &Classifier, c: usize) -> Result<(), AttackError> {
    if c >= clf.n_classes() {
        return Err(AttackError::ClassIndex(c));
    }
    Ok(())
}

fn finish(
    cfg: &AttackConfig,
    x: &[f64],
    delta: Vec<f64>,
    success: bool,
    iterations_used: usize,
    original_prediction: Prediction,
    adversarial_prediction: Prediction,
    label: usize,
    target: Option<usize>,
) -> Result<AttackResult, AttackError> {
    let snr = if success {
        Some(snr_db(x, &delta).map_err(|e| AttackError::Config(e.to_string()))?)
    } else {
        None
    };
    Ok(AttackResult {
        method: cfg.method,
        success,
        delta,
        iterations_used,
        snr_db: snr,
        original_prediction,
        adversarial_prediction,
        label,
        target,
    })
}

/// Single signed-gradient ascent step of size `lambda` on the loss of the true label.
pub fn fgsm(clf: &Classifier, x: &[f64], label: usize, cfg: &AttackConfig) -> Result<AttackResult, AttackError> {
    cfg.validate()?;
    check_class(clf, label)?;
    let clean = clf.evaluate_samples(x, LossTarget::Label(label), true)?;
    let original = Prediction::from_logits(&clean.logits);
    if original.class_index != label {
        let p = original.clone();
        return finish(cfg, x, vec![0.0; x.len()], true, 0, original, p, label, None);
    }
    let grad = clean.input_grad.expect("requested");
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(AttackError::NonFiniteGradient(0));
    }
    let delta: Vec<f64> = grad.iter().map(|&g| cfg.lambda * sign(g)).collect();
    let x_adv: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
    let adv = clf.predict_samples(&x_adv)?;
    let success = adv.class_index != label;
    finish(cfg, x, delta, success, 1, original, adv, label, None)
}

/// Untargeted iterative attack from a uniform random start in the epsilon box.
pub fn pgdn(clf: &Classifier, x: &[f64], label: usize, cfg: &AttackConfig) -> Result<AttackResult, AttackError> {
    cfg.validate()?;
    check_class(clf, label)?;
    let original = clf.predict_samples(x)?;
    if original.class_index != label {
        let p = original.clone();
        return finish(cfg, x, vec![0.0; x.len()], true, 0, original, p, label, None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let eps = cfg.epsilon;
    let delta0: Vec<f64> = if eps > 0.0 { (0..x.len()).map(|_| rng.gen_range(-eps..=eps)).collect() } else { vec![0.0; x.len()] };
    iterate(clf, x, label, None, cfg, delta0, original, None)
}

/// Targeted attack minimising `|delta|^2 + alpha * CE(target)`.
pub fn cw(clf: &Classifier, x: &[f64], label: usize, target: usize, cfg: &AttackConfig) -> Result<AttackResult, AttackError> {
    cfg.validate()?;
    check_class(clf, label)?;
    check_class(clf, target)?;
    let original = clf.predict_samples(x)?;
    iterate(clf, x, label, Some(target), cfg, vec![0.0; x.len()], original, None)
}

/// Targeted attack minimising `spectral_distance(x, x + delta) + alpha * CE(target)`.
///
/// The spectral distance averages each scale's absolute differences over its STFT cells,
/// which keeps `alpha` independent of clip length.
pub fn ms_cw(clf: &Classifier, x: &[f64], label: usize, target: usize, cfg: &AttackConfig) -> Result<AttackResult, AttackError> {
    cfg.validate()?;
    check_class(clf, label)?;
    check_class(clf, target)?;
    let original = clf.predict_samples(x)?;
    let spec = SpectralLoss::with_reduction(x, SpectralReduction::Mean);
    iterate(clf, x, label, Some(target), cfg, vec![0.0; x.len()], original, Some(&spec))
}

/// Dispatches on `cfg.method`. `target` is required for the targeted methods and ignored otherwise.
pub fn run_attack(
    clf: &Classifier,
    x: &[f64],
    label: usize,
    target: Option<usize>,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    match cfg.method {
        AttackMethod::Fgsm => fgsm(clf, x, label, cfg),
        AttackMethod::Pgdn => pgdn(clf, x, label, cfg),
        m @ (AttackMethod::Cw | AttackMethod::Mscw) => {
            let t = target.ok_or(AttackError::MissingTarget { method: m })?;
            if m == AttackMethod::Cw {
                cw(clf, x, label, t, cfg)
            } else {
                ms_cw(clf, x, label, t, cfg)
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn iterate(
    clf: &Classifier,
    x: &[f64],
    label: usize,
    target: Option<usize>,
    cfg: &AttackConfig,
    mut delta: Vec<f64>,
    original: Prediction,
    spectral: Option<&SpectralLoss>,
) -> Result<AttackResult, AttackError> {
    let n = x.len();
    let loss_target = match target {
        Some(t) => LossTarget::Target(t),
        None => LossTarget::Label(label),
    };
    let reached = |c: usize| match target {
        Some(t) => c == t,
        None => c != label,
    };
    let mut opt = Adam::new(AdamParams::with_lr(cfg.eta), &[n]);
    let mut x_adv = vec![0.0; n];
    let mut dir = vec![0.0; n];
    for k in 0..=cfg.max_iters {
        for i in 0..n {
            x_adv[i] = x[i] + delta[i];
        }
        let out = clf.evaluate_samples(&x_adv, loss_target, k < cfg.max_iters)?;
        let pred = Prediction::from_logits(&out.logits);
        if reached(pred.class_index) || k == cfg.max_iters {
            let success = reached(pred.class_index);
            return finish(cfg, x, delta, success, k, original, pred, label, target);
        }
        let g = out.input_grad.expect("requested");
        if g.iter().any(|v| !v.is_finite()) {
            return Err(AttackError::NonFiniteGradient(k));
        }
        match (target, spectral) {
            // ascent on the label loss
            (None, _) => {
                for i in 0..n {
                    dir[i] = -sign(g[i]);
                }
            }
            (Some(_), None) => {
                for i in 0..n {
                    dir[i] = sign(2.0 * delta[i] + cfg.alpha * g[i]);
                }
            }
            (Some(_), Some(spec)) => {
                let (_, gs) = spec.loss_and_grad(&x_adv)?;
                for i in 0..n {
                    dir[i] = sign(gs[i] + cfg.alpha * g[i]);
                }
            }
        }
        opt.step(&mut [&mut delta], &[&dir]);
        let eps = cfg.epsilon;
        for d in delta.iter_mut() {
            *d = d.clamp(-eps, eps);
        }
    }
    unreachable!("loop returns at k == max_iters")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FrontendConfig;
    use crate::model::layers::Layer;
    use crate::model::{Architecture, ClassifierModel};

    fn tiny(bias_class: usize, bias: f64) -> Classifier {
        let mut m = ClassifierModel::new(Architecture { widths: [3, 4, 4, 4], ..Architecture::default() }, 5);
        if let Some(Layer::Conv(head)) = m.layers_mut().iter_mut().rev().find(|l| matches!(l, Layer::Conv(_))) {
            head.bias[bias_class] = bias;
        }
        Classifier::new(m, FrontendConfig::default()).unwrap()
    }

    fn clip() -> Vec<f64> {
        (0..6000).map(|i| 0.3 * (i as f64 * 0.07).sin() + 0.1 * (i as f64 * 0.31).cos()).collect()
    }

    #[test]
    fn already_misclassified_untargeted_returns_zero_delta() {
        let clf = tiny(2, 50.0);
        let x = clip();
        for cfg in [AttackConfig::fgsm(0.01), AttackConfig::pgdn(0.01, 1e-4)] {
            let r = run_attack(&clf, &x, 5, None, &cfg).unwrap();
            assert!(r.success);
            assert_eq!(r.iterations_used, 0);
            assert!(r.delta.iter().all(|&d| d == 0.0));
            assert_eq!(r.snr_db, Some(Snr::NoPerturbation));
        }
    }

    #[test]
    fn zero_budget_cannot_move() {
        let clf = tiny(2, 50.0);
        let x = clip();
        let r = fgsm(&clf, &x, 2, &AttackConfig::fgsm(0.0)).unwrap();
        assert!(!r.success);
        assert!(r.delta.iter().all(|&d| d == 0.0));
        let mut cfg = AttackConfig::pgdn(0.0, 1e-3);
        cfg.max_iters = 3;
        let r = pgdn(&clf, &x, 2, &cfg).unwrap();
        assert!(!r.success);
        assert_eq!(r.iterations_used, 3);
        assert!(r.delta.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn fgsm_delta_takes_three_values() {
        let clf = tiny(0, 0.0);
        let x = clip();
        let label = clf.predict_samples(&x).unwrap().class_index;
        let r = fgsm(&clf, &x, label, &AttackConfig::fgsm(0.003)).unwrap();
        assert!(r.delta.iter().all(|&d| d == 0.003 || d == -0.003 || d == 0.0));
        assert_eq!(r.iterations_used, 1);
    }

    #[test]
    fn clipped_methods_respect_epsilon_and_cap() {
        let clf = tiny(0, 0.0);
        let x = clip();
        let label = clf.predict_samples(&x).unwrap().class_index;
        let t = (label + 1) % 12;
        for method in [AttackMethod::Pgdn, AttackMethod::Cw, AttackMethod::Mscw] {
            let cfg = AttackConfig { method, epsilon: 2e-4, eta: 1e-3, alpha: 5.0, max_iters: 4, ..AttackConfig::default() };
            let r = run_attack(&clf, &x, label, Some(t), &cfg).unwrap();
            assert!(r.iterations_used <= 4);
            assert!(r.delta.iter().all(|d| d.abs() <= 2e-4), "{method}");
            assert_eq!(r.delta.len(), x.len());
        }
    }

    #[test]
    fn targeted_methods_need_a_target() {
        let clf = tiny(0, 0.0);
        let r = run_attack(&clf, &clip(), 0, None, &AttackConfig::cw(0.01, 1e-4, 1.0));
        assert!(matches!(r, Err(AttackError::MissingTarget { .. })));
        assert!(matches!(fgsm(&clf, &clip(), 12, &AttackConfig::fgsm(0.1)), Err(AttackError::ClassIndex(12))));
    }

    #[test]
    fn pgdn_is_seed_deterministic() {
        let clf = tiny(0, 0.0);
        let x = clip();
        let label = clf.predict_samples(&x).unwrap().class_index;
        let cfg = AttackConfig { max_iters: 3, seed: 9, ..AttackConfig::pgdn(1e-3, 1e-4) };
        let a = serde_json::to_string(&pgdn(&clf, &x, label, &cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&pgdn(&clf, &x, label, &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&pgdn(&clf, &x, label, &AttackConfig { seed: 10, ..cfg }).unwrap()).unwrap();
        assert_ne!(a, c);
    }
}
