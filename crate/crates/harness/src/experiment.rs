//! Grid search over attack hyperparameters, repeated over seeds, with threshold-based selection.

use advaudio_core::attack::{derive_seed, run_attack, sample_target, AttackConfig, AttackMethod, AttackResult};
use advaudio_core::audio::{LABELS, N_CLASSES};
use advaudio_core::metrics::{adversarial_predictions, aggregate, confusion, AggregateStats, ConfusionMatrix, RunMetrics};
use advaudio_core::model::{Classifier, LabeledClip, Prediction};
use anyhow::{bail, ensure};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lambda: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub eta: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            lambda: vec![1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2],
            epsilon: vec![1e-4, 5e-4, 1e-3, 5e-3, 1e-2],
            eta: vec![1e-5, 5e-5, 1e-4, 5e-4],
            alpha: vec![1.0, 5.0, 15.0, 50.0],
        }
    }
}

impl Grid {
    /// Cartesian product of the axes the method uses.
    pub fn points(&self, method: AttackMethod, max_iters: usize) -> Vec<AttackConfig> {
        let base = AttackConfig { method, max_iters, ..AttackConfig::default() };
        match method {
            AttackMethod::Fgsm => self.lambda.iter().map(|&lambda| AttackConfig { lambda, ..base }).collect(),
            AttackMethod::Pgdn => self
                .epsilon
                .iter()
                .flat_map(|&epsilon| self.eta.iter().map(move |&eta| AttackConfig { epsilon, eta, ..base }))
                .collect(),
            AttackMethod::Cw | AttackMethod::Mscw => self
                .epsilon
                .iter()
                .flat_map(|&epsilon| {
                    self.eta.iter().flat_map(move |&eta| self.alpha.iter().map(move |&alpha| AttackConfig { epsilon, eta, alpha, ..base }))
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub method: AttackMethod,
    pub grid: Grid,
    pub max_iters: usize,
    /// One run per seed. Ignored for FGSM, which runs once.
    pub seeds: Vec<u64>,
    /// Success-count thresholds as fractions of the attacked set.
    pub min_success_fracs: Vec<f64>,
    /// Seed for the per-sample random targets, shared by every grid point.
    pub target_seed: u64,
    pub dataset: String,
    pub checkpoint_sha256: Option<String>,
}

impl ExperimentSpec {
    pub fn new(method: AttackMethod, grid: Grid) -> Self {
        Self {
            method,
            grid,
            max_iters: 500,
            seeds: (0..5).collect(),
            min_success_fracs: vec![0.75, 0.90],
            target_seed: 0,
            dataset: String::new(),
            checkpoint_sha256: None,
        }
    }

    pub fn run_seeds(&self) -> &[u64] {
        if self.method == AttackMethod::Fgsm {
            &self.seeds[..1]
        } else {
            &self.seeds
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        ensure!(!self.grid.points(self.method, self.max_iters).is_empty(), "empty grid for {}", self.method);
        ensure!(!self.seeds.is_empty(), "need at least one run seed");
        ensure!(self.max_iters >= 1, "max_iters must be at least 1");
        for &f in &self.min_success_fracs {
            ensure!(f > 0.0 && f <= 1.0, "success threshold fraction {f} outside (0, 1]");
        }
        for p in self.grid.points(self.method, self.max_iters) {
            p.validate()?;
        }
        Ok(())
    }
}

/// Outcome of one grid point over all runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub config: AttackConfig,
    pub stats: AggregateStats,
    pub runs: Vec<RunMetrics>,
    /// Ids of samples without an adversarial example in the first run.
    pub failures: Vec<String>,
    /// Adversarial-prediction confusion of the first run.
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub min_success_frac: f64,
    pub min_successes: f64,
    /// Index into `points`; `None` when no point qualifies.
    pub point: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: String,
    pub spec: ExperimentSpec,
    pub labels: Vec<String>,
    pub n_samples: usize,
    pub attacked_ids: Vec<String>,
    pub targets: Option<Vec<usize>>,
    pub clean_accuracy: f64,
    pub majority_baseline: f64,
    pub clean_confusion: ConfusionMatrix,
    pub points: Vec<PointReport>,
    pub selections: Vec<Selection>,
    pub snr_definition: String,
}

impl ExperimentReport {
    pub fn selected(&self, frac: f64) -> Option<&PointReport> {
        self.selections.iter().find(|s| s.min_success_frac == frac).and_then(|s| s.point).map(|i| &self.points[i])
    }
}

/// Highest mean SNR among points whose mean success count reaches `frac * n`; ties go to
/// fewer median iterations, then to the earlier point.
pub fn select_point(points: &[PointReport], n: usize, frac: f64) -> Selection {
    let need = frac * n as f64;
    let snr = |p: &PointReport| p.stats.mean_snr_db.map_or(f64::INFINITY, |m| m.mean);
    let iters = |p: &PointReport| p.stats.median_iterations.map_or(0.0, |m| m.mean);
    let mut best: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        if p.stats.n_success.mean + 1e-9 < need {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let q = &points[b];
                let better = snr(p) > snr(q) || (snr(p) == snr(q) && iters(p) < iters(q));
                Some(if better { i } else { b })
            }
        };
    }
    Selection { min_success_frac: frac, min_successes: need, point: best }
}

fn majority_share(labels: &[usize]) -> f64 {
    let mut counts = [0usize; N_CLASSES];
    labels.iter().for_each(|&l| counts[l] += 1);
    *counts.iter().max().unwrap_or(&0) as f64 / labels.len().max(1) as f64
}

fn clean_predictions(clf: &Classifier, data: &[LabeledClip]) -> anyhow::Result<Vec<Prediction>> {
    Ok(data.par_iter().map(|c| clf.predict_samples(c.waveform.samples())).collect::<Result<Vec<_>, _>>()?)
}

fn attack_all(
    clf: &Classifier,
    data: &[LabeledClip],
    targets: Option<&[usize]>,
    cfg: &AttackConfig,
    run_seed: u64,
) -> anyhow::Result<Vec<AttackResult>> {
    Ok(data
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let cfg = AttackConfig { seed: derive_seed(run_seed, &c.id), ..*cfg };
            run_attack(clf, c.waveform.samples(), c.label, targets.map(|t| t[i]), &cfg)
        })
        .collect::<Result<Vec<_>, _>>()?)
}

fn evaluate_points(
    spec: &ExperimentSpec,
    clf: &Classifier,
    data: &[LabeledClip],
    targets: Option<&[usize]>,
) -> anyhow::Result<Vec<PointReport>> {
    let labels: Vec<usize> = data.iter().map(|c| c.label).collect();
    let mut points = Vec::new();
    for cfg in spec.grid.points(spec.method, spec.max_iters) {
        let mut runs = Vec::new();
        let mut first: Option<(Vec<String>, ConfusionMatrix)> = None;
        for &seed in spec.run_seeds() {
            let results = attack_all(clf, data, targets, &cfg, seed)?;
            let wrapped: Vec<Option<AttackResult>> = results.iter().cloned().map(Some).collect();
            let preds = adversarial_predictions(clf, data, &wrapped)?;
            let classes: Vec<usize> = preds.iter().map(|p| p.class_index).collect();
            let correct = classes.iter().zip(&labels).filter(|(p, l)| p == l).count();
            let accuracy = correct as f64 / data.len() as f64;
            runs.push(RunMetrics::from_results(&results, data.len(), accuracy));
            if first.is_none() {
                let failures = data.iter().zip(&results).filter(|(_, r)| !r.success).map(|(c, _)| c.id.clone()).collect();
                first = Some((failures, confusion(&classes, &labels, N_CLASSES)?));
            }
            tracing::debug!(method = %cfg.method, seed, accuracy, "run finished");
        }
        let (failures, confusion) = first.expect("at least one run");
        let stats = aggregate(&runs)?;
        tracing::info!(
            method = %cfg.method,
            lambda = cfg.lambda,
            epsilon = cfg.epsilon,
            eta = cfg.eta,
            alpha = cfg.alpha,
            successes = stats.n_success.mean,
            snr = ?stats.mean_snr_db.map(|m| m.mean),
            "grid point done"
        );
        points.push(PointReport { config: AttackConfig { seed: 0, ..cfg }, stats, runs, failures, confusion });
    }
    Ok(points)
}

fn build_report(
    kind: &str,
    spec: &ExperimentSpec,
    data: &[LabeledClip],
    clean: &[Prediction],
    targets: Option<Vec<usize>>,
    points: Vec<PointReport>,
) -> anyhow::Result<ExperimentReport> {
    let labels: Vec<usize> = data.iter().map(|c| c.label).collect();
    let clean_classes: Vec<usize> = clean.iter().map(|p| p.class_index).collect();
    let correct = clean_classes.iter().zip(&labels).filter(|(p, l)| p == l).count();
    let selections = spec.min_success_fracs.iter().map(|&f| select_point(&points, data.len(), f)).collect();
    Ok(ExperimentReport {
        kind: kind.to_string(),
        spec: spec.clone(),
        labels: LABELS.iter().map(|s| s.to_string()).collect(),
        n_samples: data.len(),
        attacked_ids: data.iter().map(|c| c.id.clone()).collect(),
        targets,
        clean_accuracy: correct as f64 / data.len().max(1) as f64,
        majority_baseline: majority_share(&labels),
        clean_confusion: confusion(&clean_classes, &labels, N_CLASSES)?,
        points,
        selections,
        snr_definition: "10*log10(sum(x^2)/sum(delta^2)) per sample, averaged in dB over successful non-zero perturbations".into(),
    })
}

/// Attacks every sample at every grid point for every run seed. Targeted methods draw one
/// random target per sample (different from its clean prediction) and reuse it everywhere.
pub fn run_grid_search(spec: &ExperimentSpec, clf: &Classifier, data: &[LabeledClip]) -> anyhow::Result<ExperimentReport> {
    spec.validate()?;
    ensure!(!data.is_empty(), "no samples to attack");
    let clean = clean_predictions(clf, data)?;
    let targets: Option<Vec<usize>> = spec.method.is_targeted().then(|| {
        data.iter().zip(&clean).map(|(c, p)| sample_target(p.class_index, N_CLASSES, &c.id, spec.target_seed)).collect()
    });
    let points = evaluate_points(spec, clf, data, targets.as_deref())?;
    build_report("grid", spec, data, &clean, targets, points)
}

/// Targeted attacks toward one class on every sample not already predicted as that class.
pub fn run_all_to_target(spec: &ExperimentSpec, clf: &Classifier, data: &[LabeledClip], target: usize) -> anyhow::Result<ExperimentReport> {
    spec.validate()?;
    if !spec.method.is_targeted() {
        bail!("{} is not a targeted method", spec.method);
    }
    ensure!(target < N_CLASSES, "target class {target} out of range");
    let clean = clean_predictions(clf, data)?;
    let (subset, sub_clean): (Vec<LabeledClip>, Vec<Prediction>) =
        data.iter().cloned().zip(clean).filter(|(_, p)| p.class_index != target).unzip();
    ensure!(!subset.is_empty(), "every sample is already predicted as {}", LABELS[target]);
    let targets = vec![target; subset.len()];
    let points = evaluate_points(spec, clf, &subset, Some(&targets))?;
    build_report(&format!("all_to_{}", LABELS[target]), spec, &subset, &sub_clean, Some(targets), points)
}
