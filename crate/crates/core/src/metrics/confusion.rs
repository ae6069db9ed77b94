use super::MetricsError;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Rows are predictions, columns ground truth; `normalized` divides each column by its total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub normalized: Vec<Vec<f64>>,
}

pub fn confusion(predictions: &[usize], labels: &[usize], n_classes: usize) -> Result<ConfusionMatrix, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::Length(predictions.len(), labels.len()));
    }
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (&p, &g) in predictions.iter().zip(labels) {
        if p >= n_classes || g >= n_classes {
            return Err(MetricsError::ClassIndex(p.max(g)));
        }
        counts[p][g] += 1;
    }
    let mut normalized = vec![vec![0.0; n_classes]; n_classes];
    for g in 0..n_classes {
        let total: u64 = (0..n_classes).map(|p| counts[p][g]).sum();
        if total > 0 {
            for p in 0..n_classes {
                normalized[p][g] = counts[p][g] as f64 / total as f64;
            }
        }
    }
    Ok(ConfusionMatrix { counts, normalized })
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Long format: `prediction,truth,count,normalized`, one row per cell.
    pub fn write_csv(&self, path: impl AsRef<Path>, labels: &[&str]) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["prediction", "truth", "count", "normalized"])?;
        let name = |i: usize| labels.get(i).map_or_else(|| i.to_string(), |s| s.to_string());
        for p in 0..self.n_classes() {
            for g in 0..self.n_classes() {
                w.write_record([name(p), name(g), self.counts[p][g].to_string(), self.normalized[p][g].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Heatmap of the normalized matrix, white (0) to dark blue (1), `cell` pixels per entry.
    pub fn write_png(&self, path: impl AsRef<Path>, cell: u32) -> Result<(), MetricsError> {
        let n = self.n_classes() as u32;
        if n == 0 || cell == 0 {
            return Err(MetricsError::Empty("confusion matrix"));
        }
        let img = image::RgbImage::from_fn(n * cell, n * cell, |x, y| {
            let (p, g) = ((y / cell) as usize, (x / cell) as usize);
            if x % cell == 0 || y % cell == 0 {
                return image::Rgb([200, 200, 200]);
            }
            let v = self.normalized[p][g].clamp(0.0, 1.0);
            let lerp = |a: f64, b: f64| (a + (b - a) * v).round() as u8;
            image::Rgb([lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0)])
        });
        img.save_with_format(path, image::ImageFormat::Png).map_err(|e| MetricsError::Image(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_three_samples() {
        let m = confusion(&[0, 1, 1], &[0, 0, 1], 12).unwrap();
        assert_eq!(m.normalized[0][0], 0.5);
        assert_eq!(m.normalized[1][0], 0.5);
        assert_eq!(m.normalized[1][1], 1.0);
        assert!((2..12).all(|p| m.normalized[p][0] == 0.0 && m.normalized[p][1] == 0.0));
        assert_eq!(m.total(), 3);
    }

    #[test]
    fn perfect_predictions_give_identity_on_present_columns() {
        let labels = [0, 3, 3, 7, 11];
        let m = confusion(&labels, &labels, 12).unwrap();
        for g in 0..12 {
            for p in 0..12 {
                let want = if p == g && labels.contains(&g) { 1.0 } else { 0.0 };
                assert_eq!(m.normalized[p][g], want);
            }
        }
    }

    #[test]
    fn out_of_range_and_length_errors() {
        assert!(matches!(confusion(&[12], &[0], 12), Err(MetricsError::ClassIndex(12))));
        assert!(matches!(confusion(&[0, 1], &[0], 12), Err(MetricsError::Length(2, 1))));
    }

    #[test]
    fn csv_and_png_export() {
        let dir = tempfile::tempdir().unwrap();
        let m = confusion(&[0, 1, 1, 2], &[0, 0, 1, 2], 3).unwrap();
        let csv_path = dir.path().join("c.csv");
        m.write_csv(&csv_path, &["a", "b", "c"]).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert!(text.contains("b,a,1,0.5"));
        let png = dir.path().join("c.png");
        m.write_png(&png, 10).unwrap();
        let img = image::open(&png).unwrap().to_rgb8();
        assert_eq!(img.dimensions(), (30, 30));
        assert_eq!(img.get_pixel(15, 15).0, [8, 48, 107]);
        assert_eq!(img.get_pixel(15, 5).0, [255, 255, 255]);
    }
}
