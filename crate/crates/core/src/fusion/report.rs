use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, ConfusionMatrix, MetricsReport};
use super::{fuse_streams, predict_classes, FusionMethod};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamResult {
    pub name: String,
    pub predictions: Vec<usize>,
    pub report: MetricsReport,
    pub confusion: ConfusionMatrix,
}

/// Per-stream and fused results, rows ordered Inertial, Vision,
/// Fusion(avg), Fusion(max).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<StreamResult>,
}

const CSV_HEADER: &str = "stream,accuracy,macro_precision,macro_recall,macro_f1";

impl Comparison {
    pub fn row(&self, name: &str) -> Option<&StreamResult> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// The better fusion method by accuracy; average wins ties.
    pub fn winner(&self) -> FusionMethod {
        let acc = |m: FusionMethod| self.row(m.label()).map_or(0.0, |r| r.report.accuracy);
        if acc(FusionMethod::Average) >= acc(FusionMethod::Max) {
            FusionMethod::Average
        } else {
            FusionMethod::Max
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let m = &r.report;
            s.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                r.name, m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1
            ));
        }
        s
    }

    /// Reads back the summary rows written by [`Comparison::to_csv`].
    pub fn parse_csv(text: &str) -> Result<Vec<(String, [f64; 4])>> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(Error::Report("metrics table has an unexpected header".into()));
        }
        lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                let cells: Vec<&str> = l.split(',').collect();
                if cells.len() != 5 {
                    return Err(Error::Report(format!("malformed metrics row {l:?}")));
                }
                let mut v = [0.0; 4];
                for (slot, cell) in v.iter_mut().zip(&cells[1..]) {
                    *slot = cell
                        .parse()
                        .map_err(|_| Error::Report(format!("bad number {cell:?} in metrics row")))?;
                }
                Ok((cells[0].to_string(), v))
            })
            .collect()
    }

    pub fn to_table(&self) -> String {
        let rows: Vec<(String, [f64; 4])> = self
            .rows
            .iter()
            .map(|r| {
                let m = &r.report;
                (r.name.clone(), [m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1])
            })
            .collect();
        format_table(&rows)
    }
}

/// Fixed-width text table of percentages.
pub(crate) fn format_table(rows: &[(String, [f64; 4])]) -> String {
    let mut s = format!(
        "{:<12} {:>9} {:>10} {:>8} {:>9}\n",
        "Stream", "Accuracy", "Precision", "Recall", "F1-Score"
    );
    for (name, v) in rows {
        s.push_str(&format!(
            "{:<12} {:>8.1}% {:>9.1}% {:>7.1}% {:>8.1}%\n",
            name,
            100.0 * v[0],
            100.0 * v[1],
            100.0 * v[2],
            100.0 * v[3]
        ));
    }
    s
}

fn stream_result(name: &str, predictions: Vec<usize>, labels: &[usize], n_classes: usize) -> Result<StreamResult> {
    let (report, confusion) = evaluate(&predictions, labels, n_classes)?;
    Ok(StreamResult {
        name: name.to_string(),
        predictions,
        report,
        confusion,
    })
}

/// Evaluates each stream alone and both fusion methods on aligned
/// `[N × C]` score tensors.
pub fn compare_streams(vision: &Tensor, inertial: &Tensor, labels: &[usize]) -> Result<Comparison> {
    if vision.shape() != inertial.shape() || vision.rank() != 2 || vision.shape()[0] != labels.len() {
        return Err(Error::Alignment(format!(
            "vision scores {:?}, inertial scores {:?} and {} labels do not line up",
            vision.shape(),
            inertial.shape(),
            labels.len()
        )));
    }
    let n_classes = vision.shape()[1];
    let mut rows = vec![
        stream_result("Inertial", predict_classes(inertial), labels, n_classes)?,
        stream_result("Vision", predict_classes(vision), labels, n_classes)?,
    ];
    for method in [FusionMethod::Average, FusionMethod::Max] {
        let fused = fuse_streams(&[vision, inertial], method)?;
        rows.push(stream_result(method.label(), fused, labels, n_classes)?);
    }
    Ok(Comparison { rows })
}
