use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::corpus::StanceLabel;

/// 3x3 counts indexed `[gold][pred]` in [`StanceLabel::ALL`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn add(&mut self, gold: StanceLabel, pred: StanceLabel) {
        self.counts[gold.index()][pred.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for g in 0..3 {
            for p in 0..3 {
                self.counts[g][p] += other.counts[g][p];
            }
        }
    }
}

pub fn confusion(gold: &[StanceLabel], pred: &[StanceLabel]) -> Result<ConfusionMatrix, AnalysisError> {
    if gold.len() != pred.len() {
        return Err(AnalysisError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&g, &p) in gold.iter().zip(pred) {
        cm.add(g, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: StanceLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class: [ClassMetrics; 3],
    pub macro_f1: f64,
    pub n: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, per-class precision/recall/F1 and macro F1. Undefined ratios are 0.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport, AnalysisError> {
    let n = cm.total();
    if n == 0 {
        return Err(AnalysisError::Empty);
    }
    let per_class = StanceLabel::ALL.map(|label| {
        let i = label.index();
        let tp = cm.counts[i][i];
        let predicted: u64 = (0..3).map(|g| cm.counts[g][i]).sum();
        let actual: u64 = cm.counts[i].iter().sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, actual);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            label,
            precision,
            recall,
            f1,
        }
    });
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / 3.0;
    Ok(MetricsReport {
        accuracy: ratio(cm.trace(), n),
        per_class,
        macro_f1,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`).
pub fn mean_stderr(values: &[f64]) -> Result<MeanStderr, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok(MeanStderr { mean, stderr: 0.0 });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MeanStderr {
        mean,
        stderr: var.sqrt() / n.sqrt(),
    })
}
