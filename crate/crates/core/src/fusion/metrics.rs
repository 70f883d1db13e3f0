use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts indexed by (true class, predicted class).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn to_csv(&self) -> String {
        let n = self.n_classes();
        let mut s = String::from("true\\pred");
        for j in 0..n {
            s.push_str(&format!(",{j}"));
        }
        s.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            s.push_str(&i.to_string());
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }

    /// Reads back the format written by [`ConfusionMatrix::to_csv`].
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.is_empty());
        let n = match lines.next() {
            Some(h) if h.starts_with("true\\pred") => h.split(',').count() - 1,
            _ => return Err(Error::Report("confusion matrix has an unexpected header".into())),
        };
        let mut counts = Vec::with_capacity(n);
        for (i, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != n + 1 || cells[0] != i.to_string() {
                return Err(Error::Report(format!("malformed confusion row {line:?}")));
            }
            let row = cells[1..]
                .iter()
                .map(|c| c.parse().map_err(|_| Error::Report(format!("bad count {c:?}"))))
                .collect::<Result<Vec<u64>>>()?;
            counts.push(row);
        }
        if counts.len() != n || n == 0 {
            return Err(Error::Report(format!("confusion matrix has {} rows for {n} classes", counts.len())));
        }
        Ok(Self { counts })
    }

    pub fn to_svg(&self, title: &str) -> String {
        crate::plot::heatmap(title, &self.row_percentages())
    }

    /// Each row divided by its total, in percent; empty rows stay zero.
    pub fn row_percentages(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.iter()
                    .map(|&v| if total == 0 { 0.0 } else { 100.0 * v as f64 / total as f64 })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, per-class and macro-averaged precision/recall/F1, and the
/// confusion matrix. A class never predicted has precision 0; a class never
/// present has recall 0.
pub fn evaluate(predictions: &[usize], labels: &[usize], n_classes: usize) -> Result<(MetricsReport, ConfusionMatrix)> {
    if predictions.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() || n_classes == 0 {
        return Err(Error::Validation("nothing to evaluate".into()));
    }
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (&p, &t) in predictions.iter().zip(labels) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::Validation(format!("class id out of range: predicted {p}, true {t}")));
        }
        counts[t][p] += 1;
    }
    let cm = ConfusionMatrix { counts };
    let per_class: Vec<ClassMetrics> = (0..n_classes)
        .map(|c| {
            let tp = cm.counts[c][c];
            let predicted: u64 = cm.counts.iter().map(|r| r[c]).sum();
            let support: u64 = cm.counts[c].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n_classes as f64;
    let report = MetricsReport {
        accuracy: ratio(cm.trace(), cm.total()),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        per_class,
    };
    Ok((report, cm))
}
