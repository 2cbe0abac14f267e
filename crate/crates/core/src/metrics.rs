//! Confusion counts with normal as the positive class, the four ratio
//! metrics, rank AUC and wall-clock timing.
//!
//! Orientation: TP = normal predicted normal, TN = anomalous predicted
//! anomalous, FP = normal predicted anomalous, FN = anomalous predicted
//! normal. Every 0/0 ratio is 0.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Label;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("predictions ({predictions}) and truth ({truth}) differ in length")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("no instances to evaluate")]
    Empty,
    #[error("AUC needs both classes present")]
    SingleClass,
    #[error("repetitions must be at least 1")]
    NoRepetitions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Counts with anomalous as the positive class.
    pub fn inverted(&self) -> Self {
        Self {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion(predictions: &[Label], truth: &[Label]) -> Result<ConfusionCounts, MetricsError> {
    if predictions.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut c = ConfusionCounts::default();
    for (p, t) in predictions.iter().zip(truth) {
        match (t, p) {
            (Label::Normal, Label::Normal) => c.tp += 1,
            (Label::Anomalous, Label::Anomalous) => c.tn += 1,
            (Label::Normal, Label::Anomalous) => c.fp += 1,
            (Label::Anomalous, Label::Normal) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn accuracy(c: &ConfusionCounts) -> f64 {
    ratio(c.tp + c.tn, c.total())
}

pub fn precision(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, c.tp + c.fp)
}

pub fn recall(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, c.tp + c.fn_)
}

pub fn f1(c: &ConfusionCounts) -> f64 {
    ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_)
}

/// Mann–Whitney AUC with anomalous as the positive class; tied scores get
/// half credit through average ranks.
pub fn auc(scores: &[f64], truth: &[Label]) -> Result<f64, MetricsError> {
    if scores.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: scores.len(),
            truth: truth.len(),
        });
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n_pos = truth.iter().filter(|l| l.is_anomalous()).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of 1-based average ranks of the positives, doubled to stay integral
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]].total_cmp(&scores[order[i]]).is_eq() {
            j += 1;
        }
        let twice_avg = (i + 1 + j + 1) as u128;
        let pos_in_group = order[i..=j]
            .iter()
            .filter(|&&k| truth[k].is_anomalous())
            .count() as u128;
        twice_rank_sum += twice_avg * pos_in_group;
        i = j + 1;
    }
    let n_pos = n_pos as u128;
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg as u128) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub mean_ms: f64,
    pub std_ms: f64,
}

/// Wall-clock mean and population standard deviation per call.
pub fn timeit<F: FnMut()>(mut op: F, repetitions: usize) -> Result<Timing, MetricsError> {
    if repetitions == 0 {
        return Err(MetricsError::NoRepetitions);
    }
    let samples: Vec<f64> = (0..repetitions)
        .map(|_| {
            let start = Instant::now();
            op();
            start.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / repetitions as f64;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / repetitions as f64;
    Ok(Timing {
        mean_ms: mean,
        std_ms: var.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the evaluated set holds a single class.
    pub auc: Option<f64>,
    pub counts: ConfusionCounts,
    pub inference_ms: f64,
    pub scaling_reduction_s: f64,
}

impl MetricReport {
    pub fn from_predictions(
        predictions: &[Label],
        scores: &[f64],
        truth: &[Label],
        invert_positive: bool,
    ) -> Result<Self, MetricsError> {
        let mut counts = confusion(predictions, truth)?;
        if invert_positive {
            counts = counts.inverted();
        }
        let auc = match auc(scores, truth) {
            Ok(v) => Some(v),
            Err(MetricsError::SingleClass) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            accuracy: accuracy(&counts),
            precision: precision(&counts),
            recall: recall(&counts),
            f1: f1(&counts),
            auc,
            counts,
            inference_ms: 0.0,
            scaling_reduction_s: 0.0,
        })
    }
}

/// Column order of the report tables.
pub const REPORT_HEADER: [&str; 11] = [
    "Algorithm",
    "SR",
    "API/tier",
    "Inference Time (ms)",
    "AUC",
    "Accuracy",
    "Recall",
    "Precision",
    "F1-Score",
    "Scaling/Reduction Time (s)",
    "Model Size (KB)",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub algorithm: String,
    pub sr: String,
    pub tier: String,
    pub model_size_kb: f64,
    pub metrics: MetricReport,
}

impl ReportRow {
    fn fields(&self) -> [String; 11] {
        let m = &self.metrics;
        [
            self.algorithm.clone(),
            self.sr.clone(),
            self.tier.clone(),
            format!("{:.4}", m.inference_ms),
            m.auc
                .map_or_else(|| "NA".to_string(), |v| format!("{v:.4}")),
            format!("{:.4}", m.accuracy),
            format!("{:.4}", m.recall),
            format!("{:.4}", m.precision),
            format!("{:.4}", m.f1),
            format!("{:.4}", m.scaling_reduction_s),
            format!("{:.2}", self.model_size_kb),
        ]
    }
}

pub fn write_report_csv<W: Write>(rows: &[ReportRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}
