use crate::experiment::{ExperimentReport, PointReport};
use advaudio_core::metrics::{ConfusionMatrix, MeanStd};
use anyhow::{ensure, Context};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn pm(m: Option<MeanStd>, prec: usize) -> String {
    match m {
        Some(m) => format!("{:.prec$} ± {:.prec$}", m.mean, m.std),
        None => "–".into(),
    }
}

fn point_label(p: &PointReport) -> String {
    let c = &p.config;
    match c.method {
        advaudio_core::attack::AttackMethod::Fgsm => format!("fgsm λ={}", c.lambda),
        advaudio_core::attack::AttackMethod::Pgdn => format!("pgdn ε={} η={}", c.epsilon, c.eta),
        m => format!("{m} ε={} η={} α={}", c.epsilon, c.eta, c.alpha),
    }
}

fn row(out: &mut String, name: &str, p: &PointReport) {
    let s = &p.stats;
    let _ = writeln!(
        out,
        "| {name} | {} | {} | {} | {} | {} |",
        pm(Some(s.n_success), 1),
        pm(Some(s.accuracy), 3),
        pm(s.mean_snr_db, 2),
        pm(s.median_iterations, 1),
        pm(s.mean_confidence, 2),
    );
}

pub fn markdown(report: &ExperimentReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {} ({})\n", report.spec.method, report.kind);
    let _ = writeln!(
        out,
        "{} samples, clean accuracy {:.3}, majority-class baseline {:.3}.\n",
        report.n_samples, report.clean_accuracy, report.majority_baseline
    );
    let header = "| Point | Samples | Accuracy | SNR | Iterations | Confidence |\n|---|---|---|---|---|---|\n";
    out.push_str("## Selected\n\n");
    out.push_str(header);
    let _ = writeln!(out, "| clean | {} | {:.3} | – | – | – |", report.n_samples, report.clean_accuracy);
    for s in &report.selections {
        match s.point {
            Some(i) => row(&mut out, &format!("≥{:.0}% success: {}", 100.0 * s.min_success_frac, point_label(&report.points[i])), &report.points[i]),
            None => {
                let _ = writeln!(out, "| ≥{:.0}% success: no qualifying point | – | – | – | – | – |", 100.0 * s.min_success_frac);
            }
        }
    }
    out.push_str("\n## All grid points\n\n");
    out.push_str(header);
    for p in &report.points {
        row(&mut out, &point_label(p), p);
    }
    let _ = writeln!(out, "\nSNR: {}.", report.snr_definition);
    out
}

fn write_confusion(dir: &Path, stem: &str, m: &ConfusionMatrix, labels: &[String], files: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    let names: Vec<&str> = labels.iter().map(String::as_str).collect();
    let csv = dir.join(format!("{stem}.csv"));
    let png = dir.join(format!("{stem}.png"));
    m.write_csv(&csv, &names)?;
    m.write_png(&png, 24)?;
    files.extend([csv, png]);
    Ok(())
}

/// Writes `report.json`, `report.md` and confusion CSV/PNG files into `dir`.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    ensure!(!report.points.is_empty(), "report has no grid points");
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files = Vec::new();
    let json = dir.join("report.json");
    std::fs::write(&json, serde_json::to_string_pretty(report)?)?;
    files.push(json);
    let md = dir.join("report.md");
    std::fs::write(&md, markdown(report))?;
    files.push(md);
    write_confusion(dir, "confusion_clean", &report.clean_confusion, &report.labels, &mut files)?;
    for s in &report.selections {
        if let Some(i) = s.point {
            let stem = format!("confusion_{}_{:.0}", report.spec.method, 100.0 * s.min_success_frac);
            write_confusion(dir, &stem, &report.points[i].confusion, &report.labels, &mut files)?;
        }
    }
    Ok(files)
}

pub fn read_report(path: &Path) -> anyhow::Result<ExperimentReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}
