//! Binary classification metrics (positive class = fake) and histograms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::Label;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    Empty,
    #[error("{truth} ground-truth labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error("histogram range [{0}, {1}] is invalid")]
    BadRange(f64, f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn from_labels(truth: &[Label], predicted: &[Label]) -> Result<Self, EvalError> {
        if truth.len() != predicted.len() {
            return Err(EvalError::LengthMismatch {
                truth: truth.len(),
                predicted: predicted.len(),
            });
        }
        let mut c = Self::default();
        for (t, p) in truth.iter().zip(predicted) {
            match (t, p) {
                (Label::Fake, Label::Fake) => c.tp += 1,
                (Label::Real, Label::Fake) => c.fp += 1,
                (Label::Real, Label::Real) => c.tn += 1,
                (Label::Fake, Label::Real) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Which quotients hit 0/0 and were defined as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degeneracy {
    pub recall: bool,
    pub precision: bool,
    pub f1: bool,
}

impl Degeneracy {
    pub fn any(&self) -> bool {
        self.recall || self.precision || self.f1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
    pub positive_class: PositiveClass,
    #[serde(default, skip_serializing_if = "is_clean")]
    pub degenerate: Degeneracy,
}

fn is_clean(d: &Degeneracy) -> bool {
    !d.any()
}

/// Always `"fake"` on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositiveClass {
    Fake,
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

pub fn metrics(counts: ConfusionCounts) -> Result<Metrics, EvalError> {
    let total = counts.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let (tp, fp, tn, fn_) = (
        counts.tp as f64,
        counts.fp as f64,
        counts.tn as f64,
        counts.fn_ as f64,
    );
    let accuracy = (tp + tn) / total as f64;
    let (recall, d_recall) = ratio(tp, tp + fn_);
    let (precision, d_precision) = ratio(tp, tp + fp);
    let (f1, d_f1) = ratio(2.0 * precision * recall, precision + recall);
    Ok(Metrics {
        accuracy,
        recall,
        precision,
        f1,
        counts,
        positive_class: PositiveClass::Fake,
        degenerate: Degeneracy {
            recall: d_recall,
            precision: d_precision,
            f1: d_f1,
        },
    })
}

pub fn evaluate(truth: &[Label], predicted: &[Label]) -> Result<Metrics, EvalError> {
    metrics(ConfusionCounts::from_labels(truth, predicted)?)
}

impl Metrics {
    /// Four-decimal report for terminals.
    pub fn to_human(&self) -> String {
        let mut s = format!(
            "positive class: fake\naccuracy  {:.4}\nrecall    {:.4}\nprecision {:.4}\nf1        {:.4}\ncounts    tp={} fp={} tn={} fn={}",
            self.accuracy,
            self.recall,
            self.precision,
            self.f1,
            self.counts.tp,
            self.counts.fp,
            self.counts.tn,
            self.counts.fn_
        );
        if self.degenerate.any() {
            s.push_str("\nnote: some quotients were 0/0 and are reported as 0");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    /// Index of the most populated bin (lowest on ties).
    pub fn mode_bin(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }

    /// `bin_left,bin_right,count` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_left,bin_right,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{}\n",
                crate::features::format_f64(self.edges[i]),
                crate::features::format_f64(self.edges[i + 1]),
                c
            ));
        }
        s
    }
}

/// Equal-width histogram spanning `[min, max]` of the values, last bin
/// closed. A zero-width range widens to `[v, v + 1]`.
pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram, EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    histogram_in_range(values, bins, lo, hi)
}

/// Like [`histogram`] over an explicit range; values outside it are dropped.
pub fn histogram_in_range(
    values: &[f64],
    bins: usize,
    lo: f64,
    hi: f64,
) -> Result<Histogram, EvalError> {
    if bins == 0 {
        return Err(EvalError::NoBins);
    }
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(EvalError::BadRange(lo, hi));
    }
    let hi = if hi > lo { hi } else { lo + 1.0 };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect();
    let mut counts = vec![0u64; bins];
    for &v in values {
        if !(lo..=hi).contains(&v) {
            continue;
        }
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(Histogram { edges, counts })
}
