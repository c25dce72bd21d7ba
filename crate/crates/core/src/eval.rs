//! Confusion matrices, per-class and macro metrics, fold aggregation.

use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no prediction for requirement `{0}`")]
    MissingPrediction(String),
    #[error("prediction for unknown requirement `{0}`")]
    UnexpectedPrediction(String),
    #[error("nothing to aggregate")]
    NoFolds,
}

/// `a / b`, or 0 when `b` is 0.
pub fn safe_div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    safe_div(2.0 * precision * recall, precision + recall)
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Stat { mean, std: var.sqrt() })
    }

    pub fn display(&self) -> String {
        format!("{:.2} ± {:.2}", self.mean, self.std)
    }
}

/// Counts with "conflict" as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }

    /// Metrics whose denominator is zero here and which are therefore
    /// scored as 0.
    pub fn undefined_metrics(&self) -> Vec<&'static str> {
        [
            (self.tp + self.fp, "conflict precision"),
            (self.tp + self.fn_, "conflict recall"),
            (self.tn + self.fn_, "no_conflict precision"),
            (self.tn + self.fp, "no_conflict recall"),
        ]
        .into_iter()
        .filter(|(d, _)| *d == 0)
        .map(|(_, name)| name)
        .collect()
    }

    /// Row-normalized matrix, actual class per row.
    pub fn normalized_csv(&self) -> String {
        let pos = (self.tp + self.fn_) as f64;
        let neg = (self.fp + self.tn) as f64;
        format!(
            ",pred_conflict,pred_no_conflict\nconflict,{:.4},{:.4}\nno_conflict,{:.4},{:.4}\n",
            safe_div(self.tp as f64, pos),
            safe_div(self.fn_ as f64, pos),
            safe_div(self.fp as f64, neg),
            safe_div(self.tn as f64, neg),
        )
    }
}

/// Tallies predictions against gold labels. Both maps must cover the same ids.
pub fn confusion(
    gold: &IndexMap<String, bool>,
    predicted: &IndexMap<String, bool>,
) -> Result<ConfusionMatrix, EvalError> {
    if let Some(id) = predicted.keys().find(|id| !gold.contains_key(*id)) {
        return Err(EvalError::UnexpectedPrediction(id.clone()));
    }
    let mut m = ConfusionMatrix::default();
    for (id, &g) in gold {
        let p = *predicted.get(id).ok_or_else(|| EvalError::MissingPrediction(id.clone()))?;
        match (g, p) {
            (true, true) => m.tp += 1,
            (false, true) => m.fp += 1,
            (true, false) => m.fn_ += 1,
            (false, false) => m.tn += 1,
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassMetrics {
    fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = safe_div(tp as f64, (tp + fp) as f64);
        let recall = safe_div(tp as f64, (tp + fn_) as f64);
        ClassMetrics { precision, recall, f1: f1_score(precision, recall) }
    }
}

/// Metrics for both classes and their unweighted mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroMetrics {
    pub conflict: ClassMetrics,
    pub no_conflict: ClassMetrics,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

pub fn macro_metrics(m: &ConfusionMatrix) -> MacroMetrics {
    let conflict = ClassMetrics::new(m.tp, m.fp, m.fn_);
    let no_conflict = ClassMetrics::new(m.tn, m.fn_, m.fp);
    MacroMetrics {
        conflict,
        no_conflict,
        precision: (conflict.precision + no_conflict.precision) / 2.0,
        recall: (conflict.recall + no_conflict.recall) / 2.0,
        f1: (conflict.f1 + no_conflict.f1) / 2.0,
        accuracy: safe_div((m.tp + m.tn) as f64, m.total() as f64),
    }
}

/// Fold-level macro metrics summarized as mean and population std.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub precision: Stat,
    pub recall: Stat,
    pub f1: Stat,
    pub accuracy: Stat,
    pub folds: usize,
}

impl fmt::Display for MetricSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "P {}  R {}  F1 {}  Acc {}",
            self.precision.display(),
            self.recall.display(),
            self.f1.display(),
            self.accuracy.display()
        )
    }
}

pub fn aggregate_folds(folds: &[MacroMetrics]) -> Result<MetricSummary, EvalError> {
    let col =
        |f: fn(&MacroMetrics) -> f64| Stat::of(&folds.iter().map(f).collect::<Vec<_>>()).ok_or(EvalError::NoFolds);
    Ok(MetricSummary {
        precision: col(|m| m.precision)?,
        recall: col(|m| m.recall)?,
        f1: col(|m| m.f1)?,
        accuracy: col(|m| m.accuracy)?,
        folds: folds.len(),
    })
}

/// Absolute and relative change, e.g. `↑ 0.04 / 9.30%`. The arrow is
/// dropped when the absolute change shows as 0.00; the relative part is
/// `n/a` when `base` is 0.
pub fn format_f1_change(base: f64, new: f64) -> String {
    let d = new - base;
    let abs = format!("{:.2}", d.abs());
    let rel = if base == 0.0 {
        "n/a".to_string()
    } else {
        let r = format!("{:.2}%", d / base * 100.0);
        if r == "-0.00%" {
            "0.00%".to_string()
        } else {
            r
        }
    };
    let arrow = match (abs.as_str(), d > 0.0) {
        ("0.00", _) => "",
        (_, true) => "↑ ",
        (_, false) => "↓ ",
    };
    format!("{arrow}{abs} / {rel}")
}
