//! Error classification over query vectors: an extremely randomized trees
//! ensemble, indicator baselines, and per-class precision/recall/F1.

mod forest;
mod heuristic;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

pub use forest::{fit_forest, ForestConfig, ForestModel, Node, Prediction, Tree};
pub use heuristic::{
    has_window_function, heuristic_labels, heuristic_predict, parse_big_tables, referenced_tables, HeuristicKind,
    HeuristicRule,
};

use crate::error::{Error, Result};

/// `2pr / (p + r)`, or 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Every label seen in the truth or the predictions, sorted.
    pub classes: Vec<ClassMetrics>,
    /// Support-weighted averages; `support` is the total.
    pub weighted: ClassMetrics,
    pub accuracy: f64,
}

impl Metrics {
    pub fn class(&self, label: &str) -> Option<&ClassMetrics> {
        self.classes.iter().find(|c| c.label == label)
    }

    /// Fixed-width table with precision, recall, f1-score and support.
    pub fn report(&self) -> String {
        let width = self
            .classes
            .iter()
            .map(|c| c.label.len())
            .max()
            .unwrap_or(0)
            .max("avg / total".len());
        let mut s = format!(
            "{:>width$}  {:>9}  {:>9}  {:>9}  {:>9}\n",
            "", "precision", "recall", "f1-score", "support"
        );
        for c in self.classes.iter().chain(std::iter::once(&self.weighted)) {
            let _ = writeln!(
                s,
                "{:>width$}  {:>9.3}  {:>9.3}  {:>9.3}  {:>9}",
                c.label, c.precision, c.recall, c.f1, c.support
            );
        }
        s
    }
}

/// Per-class and support-weighted precision, recall and F1. A class that
/// is never predicted has precision 0.
pub fn evaluate<S: AsRef<str>, T: AsRef<str>>(predictions: &[S], truth: &[T]) -> Result<Metrics> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: predictions.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("nothing to evaluate".into()));
    }
    let labels: BTreeSet<&str> = predictions
        .iter()
        .map(AsRef::as_ref)
        .chain(truth.iter().map(AsRef::as_ref))
        .collect();
    let mut classes = Vec::with_capacity(labels.len());
    let mut correct = 0usize;
    for &label in &labels {
        let (mut tp, mut predicted, mut support) = (0usize, 0usize, 0usize);
        for (p, t) in predictions.iter().zip(truth) {
            let (p, t) = (p.as_ref() == label, t.as_ref() == label);
            tp += (p && t) as usize;
            predicted += p as usize;
            support += t as usize;
        }
        correct += tp;
        let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
        let recall = if support == 0 { 0.0 } else { tp as f64 / support as f64 };
        classes.push(ClassMetrics {
            label: label.to_string(),
            precision,
            recall,
            f1: f1_score(precision, recall),
            support,
        });
    }
    let n = truth.len();
    let avg = |f: fn(&ClassMetrics) -> f64| classes.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / n as f64;
    let weighted = ClassMetrics {
        label: "avg / total".into(),
        precision: avg(|c| c.precision),
        recall: avg(|c| c.recall),
        f1: avg(|c| c.f1),
        support: n,
    };
    Ok(Metrics {
        classes,
        weighted,
        accuracy: correct as f64 / n as f64,
    })
}

/// One JSON line per query: id, predicted label and top-class score.
pub fn write_predictions(
    ids: &[impl AsRef<str>],
    predictions: &[Prediction],
    mut out: impl Write,
) -> std::io::Result<()> {
    for (id, p) in ids.iter().zip(predictions) {
        let rec = serde_json::json!({
            "id": id.as_ref(),
            "label": p.label,
            "score": p.top_score(),
        });
        writeln!(out, "{rec}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_zero_when_both_zero() {
        assert_eq!(f1_score(0.0, 0.0), 0.0);
        assert_eq!(f1_score(1.0, 1.0), 1.0);
    }

    #[test]
    fn evaluate_small_case() {
        let truth = ["a", "a", "b", "b", "b"];
        let pred = ["a", "b", "b", "b", "a"];
        let m = evaluate(&pred, &truth).unwrap();
        let a = m.class("a").unwrap();
        assert_eq!((a.precision, a.recall, a.support), (0.5, 0.5, 2));
        let b = m.class("b").unwrap();
        assert!((b.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((b.recall - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.accuracy, 0.6);
        assert!((m.weighted.recall - 0.6).abs() < 1e-15);
        assert!(m.report().contains("avg / total"));
    }

    #[test]
    fn unpredicted_class_has_zero_precision() {
        let m = evaluate(&["x", "x"], &["x", "y"]).unwrap();
        let y = m.class("y").unwrap();
        assert_eq!((y.precision, y.recall, y.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn evaluate_errors() {
        assert!(evaluate::<&str, &str>(&[], &[]).is_err());
        assert!(evaluate(&["a"], &["a", "b"]).is_err());
    }
}
