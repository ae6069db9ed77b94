//! Evaluation: SNR, accuracy under attack, white-noise control, confusion matrices, run aggregation.

mod aggregate;
mod confusion;

pub use aggregate::{aggregate, median, AggregateStats, MeanStd, RunMetrics, RunSummary};
pub use confusion::{confusion, ConfusionMatrix};

use crate::attack::{derive_seed, AttackResult};
use crate::model::{Classifier, LabeledClip, ModelError, Prediction};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("original signal is silent; SNR undefined")]
    SilentSignal,
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("class index {0} out of range")]
    ClassIndex(usize),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("image export: {0}")]
    Image(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Signal-to-perturbation ratio. A zero perturbation has no finite value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Snr {
    Db(f64),
    NoPerturbation,
}

impl Snr {
    pub fn db(self) -> Option<f64> {
        match self {
            Snr::Db(v) => Some(v),
            Snr::NoPerturbation => None,
        }
    }

    /// Numeric view with the marker mapped to `+inf`.
    pub fn value(self) -> f64 {
        self.db().unwrap_or(f64::INFINITY)
    }
}

fn energy(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

/// `10 * log10(sum x^2 / sum delta^2)`.
pub fn snr_db(x: &[f64], delta: &[f64]) -> Result<Snr, MetricsError> {
    if x.len() != delta.len() {
        return Err(MetricsError::Length(x.len(), delta.len()));
    }
    let ex = energy(x);
    if ex == 0.0 {
        return Err(MetricsError::SilentSignal);
    }
    let ed = energy(delta);
    if ed == 0.0 {
        return Ok(Snr::NoPerturbation);
    }
    Ok(Snr::Db(10.0 * (ex / ed).log10()))
}

/// Predictions on `x + delta` where an attack succeeded, otherwise on `x`.
pub fn adversarial_predictions(
    clf: &Classifier,
    data: &[LabeledClip],
    results: &[Option<AttackResult>],
) -> Result<Vec<Prediction>, MetricsError> {
    if data.len() != results.len() {
        return Err(MetricsError::Length(data.len(), results.len()));
    }
    data.iter()
        .zip(results)
        .map(|(clip, r)| {
            let x = clip.waveform.samples();
            match r {
                Some(r) if r.success => {
                    if r.delta.len() != x.len() {
                        return Err(MetricsError::Length(x.len(), r.delta.len()));
                    }
                    Ok(clf.predict_samples(&r.adversarial_samples(x))?)
                }
                _ => Ok(clf.predict_samples(x)?),
            }
        })
        .collect()
}

fn accuracy_of(preds: &[Prediction], data: &[LabeledClip]) -> Result<f64, MetricsError> {
    if data.is_empty() {
        return Err(MetricsError::Empty("dataset"));
    }
    let correct = preds.iter().zip(data).filter(|(p, c)| p.class_index == c.label).count();
    Ok(correct as f64 / data.len() as f64)
}

pub fn adversarial_accuracy(clf: &Classifier, data: &[LabeledClip], results: &[Option<AttackResult>]) -> Result<f64, MetricsError> {
    let preds = adversarial_predictions(clf, data, results)?;
    accuracy_of(&preds, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseBaseline {
    pub target_snr_db: f64,
    pub accuracy: f64,
    pub n_evaluated: usize,
    /// Ids of silent clips, for which no noise level can be set.
    pub skipped: Vec<String>,
    pub achieved_snr_db: Vec<f64>,
}

/// Accuracy after adding Gaussian noise scaled to exactly `target_snr_db` per clip.
/// `+inf` adds no noise.
pub fn white_noise_baseline(clf: &Classifier, data: &[LabeledClip], target_snr_db: f64, seed: u64) -> Result<NoiseBaseline, MetricsError> {
    if target_snr_db.is_nan() || target_snr_db == f64::NEG_INFINITY {
        return Err(MetricsError::Invalid(format!("target SNR {target_snr_db}")));
    }
    let mut skipped = Vec::new();
    let mut achieved = Vec::new();
    let mut correct = 0usize;
    for clip in data {
        let x = clip.waveform.samples();
        let ex = energy(x);
        if ex == 0.0 {
            skipped.push(clip.id.clone());
            continue;
        }
        let pred = if target_snr_db == f64::INFINITY {
            clf.predict_samples(x)?
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &clip.id));
            let mut noise: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let scale = (ex / (energy(&noise) * 10f64.powf(target_snr_db / 10.0))).sqrt();
            noise.iter_mut().for_each(|v| *v *= scale);
            achieved.push(snr_db(x, &noise)?.value());
            let noisy: Vec<f64> = x.iter().zip(&noise).map(|(a, b)| a + b).collect();
            clf.predict_samples(&noisy)?
        };
        correct += usize::from(pred.class_index == clip.label);
    }
    let n_evaluated = data.len() - skipped.len();
    if n_evaluated == 0 {
        return Err(MetricsError::Empty("non-silent dataset"));
    }
    Ok(NoiseBaseline {
        target_snr_db,
        accuracy: correct as f64 / n_evaluated as f64,
        n_evaluated,
        skipped,
        achieved_snr_db: achieved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::Waveform;
    use crate::dsp::FrontendConfig;
    use crate::model::{Architecture, ClassifierModel};

    #[test]
    fn snr_reference_values() {
        let x: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.05).sin()).collect();
        let tenth: Vec<f64> = x.iter().map(|v| v / 10.0).collect();
        assert!((snr_db(&x, &tenth).unwrap().value() - 20.0).abs() < 1e-9);
        assert!(snr_db(&x, &x).unwrap().value().abs() < 1e-12);
        assert_eq!(snr_db(&x, &vec![0.0; 1000]).unwrap(), Snr::NoPerturbation);
        assert!(matches!(snr_db(&[0.0; 4], &[1.0; 4]), Err(MetricsError::SilentSignal)));
        assert!(matches!(snr_db(&x, &[1.0; 3]), Err(MetricsError::Length(1000, 3))));
    }

    #[test]
    fn snr_decreases_with_perturbation_norm() {
        let x: Vec<f64> = (0..256).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let d: Vec<f64> = (0..256).map(|i| ((i * 5) % 11) as f64 * 0.01).collect();
        let mut last = f64::INFINITY;
        for k in 1..20 {
            let dk: Vec<f64> = d.iter().map(|v| v * k as f64).collect();
            let s = snr_db(&x, &dk).unwrap().value();
            assert!(s < last);
            last = s;
        }
    }

    fn clips() -> Vec<LabeledClip> {
        (0..4)
            .map(|i| LabeledClip {
                id: format!("n{i}"),
                waveform: Waveform::new((0..4000).map(|k| 0.2 * ((k * (i + 2)) as f64 * 0.01).sin()).collect(), 16_000).unwrap(),
                label: i,
            })
            .collect()
    }

    fn classifier() -> Classifier {
        Classifier::new(ClassifierModel::new(Architecture { widths: [2, 2, 2, 2], ..Architecture::default() }, 1), FrontendConfig::default()).unwrap()
    }

    #[test]
    fn noise_hits_target_snr_exactly_and_is_deterministic() {
        let (clf, data) = (classifier(), clips());
        let a = white_noise_baseline(&clf, &data, 42.16, 3).unwrap();
        assert_eq!(a.n_evaluated, 4);
        assert!(a.achieved_snr_db.iter().all(|s| (s - 42.16).abs() < 1e-9));
        assert_eq!(a, white_noise_baseline(&clf, &data, 42.16, 3).unwrap());
        assert!(white_noise_baseline(&clf, &data, f64::NAN, 3).is_err());
    }

    #[test]
    fn infinite_snr_is_clean_evaluation() {
        let (clf, data) = (classifier(), clips());
        let clean = adversarial_accuracy(&clf, &data, &vec![None; 4]).unwrap();
        let b = white_noise_baseline(&clf, &data, f64::INFINITY, 0).unwrap();
        assert_eq!(b.accuracy, clean);
        assert!(b.achieved_snr_db.is_empty());
    }

    #[test]
    fn silent_clips_are_skipped() {
        let clf = classifier();
        let mut data = clips();
        data[1].waveform = Waveform::new(vec![0.0; 4000], 16_000).unwrap();
        let b = white_noise_baseline(&clf, &data, 30.0, 0).unwrap();
        assert_eq!(b.skipped, vec!["n1".to_string()]);
        assert_eq!(b.n_evaluated, 3);
    }

    #[test]
    fn misaligned_results_are_rejected() {
        let (clf, data) = (classifier(), clips());
        assert!(matches!(adversarial_accuracy(&clf, &data, &[None]), Err(MetricsError::Length(4, 1))));
    }
}
