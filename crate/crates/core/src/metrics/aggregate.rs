use super::MetricsError;
use crate::attack::AttackResult;
use serde::{Deserialize, Serialize};

/// Per-run raw numbers. SNR, iterations and confidence only cover successful attacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub n_samples: usize,
    pub n_success: usize,
    pub accuracy: f64,
    /// Finite SNRs; zero-perturbation successes are left out.
    pub snr_db: Vec<f64>,
    pub iterations: Vec<usize>,
    pub confidences: Vec<f64>,
}

impl RunMetrics {
    pub fn from_results<'a>(results: impl IntoIterator<Item = &'a AttackResult>, n_samples: usize, accuracy: f64) -> Self {
        let mut m = RunMetrics { n_samples, n_success: 0, accuracy, snr_db: vec![], iterations: vec![], confidences: vec![] };
        for r in results.into_iter().filter(|r| r.success) {
            m.n_success += 1;
            if let Some(db) = r.snr_db.and_then(|s| s.db()) {
                m.snr_db.push(db);
            }
            m.iterations.push(r.iterations_used);
            m.confidences.push(r.adversarial_prediction.confidence);
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation across runs.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n_success: usize,
    pub accuracy: f64,
    pub mean_snr_db: Option<f64>,
    pub snr_std_db: Option<f64>,
    pub median_iterations: Option<f64>,
    pub mean_confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub n_runs: usize,
    pub n_samples: usize,
    pub n_success: MeanStd,
    pub accuracy: MeanStd,
    pub mean_snr_db: Option<MeanStd>,
    pub median_iterations: Option<MeanStd>,
    pub mean_confidence: Option<MeanStd>,
    pub runs: Vec<RunSummary>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

fn mean(values: &[f64]) -> Option<f64> {
    MeanStd::of(values).map(|m| m.mean)
}

/// Per-run means/medians, then mean and population std across runs.
/// Optional fields cover only the runs that had at least one success.
pub fn aggregate(runs: &[RunMetrics]) -> Result<AggregateStats, MetricsError> {
    if runs.is_empty() {
        return Err(MetricsError::Empty("run list"));
    }
    let summaries: Vec<RunSummary> = runs
        .iter()
        .map(|r| {
            let its: Vec<f64> = r.iterations.iter().map(|&i| i as f64).collect();
            RunSummary {
                n_success: r.n_success,
                accuracy: r.accuracy,
                mean_snr_db: mean(&r.snr_db),
                snr_std_db: MeanStd::of(&r.snr_db).map(|m| m.std),
                median_iterations: median(&its),
                mean_confidence: mean(&r.confidences),
            }
        })
        .collect();
    let col = |f: &dyn Fn(&RunSummary) -> Option<f64>| -> Option<MeanStd> {
        MeanStd::of(&summaries.iter().filter_map(f).collect::<Vec<_>>())
    };
    Ok(AggregateStats {
        n_runs: runs.len(),
        n_samples: runs[0].n_samples,
        n_success: col(&|s| Some(s.n_success as f64)).expect("non-empty"),
        accuracy: col(&|s| Some(s.accuracy)).expect("non-empty"),
        mean_snr_db: col(&|s| s.mean_snr_db),
        median_iterations: col(&|s| s.median_iterations),
        mean_confidence: col(&|s| s.mean_confidence),
        runs: summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(iters: &[usize], snr: &[f64]) -> RunMetrics {
        RunMetrics {
            n_samples: 10,
            n_success: iters.len(),
            accuracy: 0.2,
            snr_db: snr.to_vec(),
            iterations: iters.to_vec(),
            confidences: vec![0.5; iters.len()],
        }
    }

    #[test]
    fn medians_average_to_table_style_value() {
        let runs: Vec<RunMetrics> = [15, 16, 16, 16, 16].iter().map(|&m| run(&[m - 1, m, m + 3], &[40.0])).collect();
        let a = aggregate(&runs).unwrap();
        let it = a.median_iterations.unwrap();
        assert!((it.mean - 15.8).abs() < 1e-12);
        assert!((it.std - 0.4).abs() < 1e-12);
    }

    #[test]
    fn single_and_identical_runs_have_zero_std() {
        let a = aggregate(&[run(&[3, 5], &[30.0, 32.0])]).unwrap();
        assert_eq!(a.n_success.std, 0.0);
        assert_eq!(a.mean_snr_db.unwrap(), MeanStd { mean: 31.0, std: 0.0 });
        let five = vec![run(&[1, 2, 9], &[35.0]); 5];
        let a = aggregate(&five).unwrap();
        for m in [a.n_success, a.accuracy, a.mean_snr_db.unwrap(), a.median_iterations.unwrap(), a.mean_confidence.unwrap()] {
            assert_eq!(m.std, 0.0);
        }
        assert_eq!(a.median_iterations.unwrap().mean, 2.0);
    }

    #[test]
    fn empty_input_and_runs_without_successes() {
        assert!(aggregate(&[]).is_err());
        let a = aggregate(&[run(&[], &[]), run(&[4], &[20.0])]).unwrap();
        assert_eq!(a.n_success.mean, 0.5);
        assert_eq!(a.mean_snr_db.unwrap().mean, 20.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
    }
}
