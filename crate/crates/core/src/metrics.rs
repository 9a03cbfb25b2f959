//! Confusion matrices, the four classification metrics, and evaluation
//! reports.
//!
//! The toxic class (label 1) is the positive class. Degenerate
//! denominators (no predicted positives, or no actual positives) yield 0
//! with an explicit flag instead of an error or NaN, since small fixture
//! folds can legitimately hit them.

use std::fmt;

use crate::dataset::EncodedDataset;
use crate::error::{Error, Result};
use crate::network::{predict, ModelParams};
use crate::vocab::PaddedSequence;

/// TP/TN/FP/FN counts over one evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionMatrix {
    /// Counts predictions against labels; positive class is 1.
    pub fn from_predictions(preds: &[u8], labels: &[u8]) -> Result<ConfusionMatrix> {
        if preds.len() != labels.len() || preds.is_empty() {
            return Err(Error::Shape {
                op: "confusion",
                left: (preds.len(), 1),
                right: (labels.len(), 1),
            });
        }
        let mut cm = ConfusionMatrix::default();
        for (&p, &y) in preds.iter().zip(labels) {
            match (p, y) {
                (1, 1) => cm.tp += 1,
                (0, 0) => cm.tn += 1,
                (1, 0) => cm.fp += 1,
                (0, 1) => cm.fn_ += 1,
                _ => {
                    return Err(Error::Argument(format!(
                        "labels must be binary, got pred={p}, label={y}"
                    )))
                }
            }
        }
        Ok(cm)
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Fraction of correctly classified samples.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.total() == 0 {
        return Err(Error::Argument("accuracy of an empty confusion matrix".into()));
    }
    Ok((cm.tp + cm.tn) as f64 / cm.total() as f64)
}

/// Fraction of predicted positives that are real; `(0, flagged)` when
/// nothing was predicted positive.
pub fn precision(cm: &ConfusionMatrix) -> (f64, bool) {
    if cm.tp + cm.fp == 0 {
        (0.0, true)
    } else {
        (cm.tp as f64 / (cm.tp + cm.fp) as f64, false)
    }
}

/// Fraction of real positives recovered; `(0, flagged)` when there are no
/// real positives.
pub fn recall(cm: &ConfusionMatrix) -> (f64, bool) {
    if cm.tp + cm.fn_ == 0 {
        (0.0, true)
    } else {
        (cm.tp as f64 / (cm.tp + cm.fn_) as f64, false)
    }
}

/// Harmonic mean of precision and recall; 0 when both vanish.
pub fn f_score(precision: f64, recall: f64) -> Result<f64> {
    for (name, v) in [("precision", precision), ("recall", recall)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Argument(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Identification of one evaluation run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunMeta {
    pub optimizer: Option<String>,
    pub seed: Option<u64>,
    pub fold: Option<usize>,
}

/// The confusion matrix and all four derived metrics for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub cm: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_degenerate: bool,
    pub recall_degenerate: bool,
    pub meta: RunMeta,
}

impl MetricsReport {
    pub fn from_confusion(cm: ConfusionMatrix, meta: RunMeta) -> Result<MetricsReport> {
        let accuracy = accuracy(&cm)?;
        let (p, p_deg) = precision(&cm);
        let (r, r_deg) = recall(&cm);
        let f1 = f_score(p, r)?;
        Ok(MetricsReport {
            cm,
            accuracy,
            precision: p,
            recall: r,
            f1,
            precision_degenerate: p_deg,
            recall_degenerate: r_deg,
            meta,
        })
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(opt) = &self.meta.optimizer {
            writeln!(f, "optimizer: {opt}")?;
        }
        if let Some(seed) = self.meta.seed {
            writeln!(f, "seed: {seed}")?;
        }
        if let Some(fold) = self.meta.fold {
            writeln!(f, "fold: {fold}")?;
        }
        writeln!(
            f,
            "confusion: tp={} tn={} fp={} fn={}",
            self.cm.tp, self.cm.tn, self.cm.fp, self.cm.fn_
        )?;
        writeln!(f, "accuracy: {:.4}", self.accuracy)?;
        let flag = |d: bool| if d { " (degenerate denominator)" } else { "" };
        writeln!(f, "precision: {:.4}{}", self.precision, flag(self.precision_degenerate))?;
        writeln!(f, "recall: {:.4}{}", self.recall, flag(self.recall_degenerate))?;
        write!(f, "f1: {:.4}", self.f1)
    }
}

/// Runs the frozen model over a dataset and derives all metrics.
///
/// `threads > 1` shards the forward pass; results are identical to the
/// single-threaded path because inference is pure.
pub fn evaluate(
    model: &ModelParams,
    data: &EncodedDataset,
    threshold: f64,
    threads: usize,
    meta: RunMeta,
) -> Result<MetricsReport> {
    let probs = batch_probabilities(model, &data.sequences, threads)?;
    let preds: Vec<u8> = probs
        .iter()
        .map(|&p| predict(p, threshold))
        .collect::<Result<_>>()?;
    let cm = ConfusionMatrix::from_predictions(&preds, &data.labels)?;
    MetricsReport::from_confusion(cm, meta)
}

/// Forward probabilities over an arbitrary number of rows, in chunks.
pub fn batch_probabilities(
    model: &ModelParams,
    sequences: &[PaddedSequence],
    threads: usize,
) -> Result<Vec<f64>> {
    if sequences.is_empty() {
        return Err(Error::Argument("evaluate needs a non-empty dataset".into()));
    }
    const CHUNK: usize = 256;
    let chunks: Vec<&[PaddedSequence]> = sequences.chunks(CHUNK).collect();
    if threads <= 1 || chunks.len() == 1 {
        let mut probs = Vec::with_capacity(sequences.len());
        for chunk in chunks {
            probs.extend(model.forward(chunk)?);
        }
        return Ok(probs);
    }

    let results: Vec<Result<Vec<f64>>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for group in chunks.chunks((chunks.len() + threads - 1) / threads) {
            handles.push(scope.spawn(move || {
                let mut out = Vec::new();
                for chunk in group {
                    out.extend(model.forward(chunk)?);
                }
                Ok(out)
            }));
        }
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    });
    let mut probs = Vec::with_capacity(sequences.len());
    for r in results {
        probs.extend(r?);
    }
    Ok(probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_enumeration_example() {
        let cm = ConfusionMatrix::from_predictions(&[1, 0, 1], &[1, 1, 0]).unwrap();
        assert_eq!((cm.tp, cm.fn_, cm.fp, cm.tn), (1, 1, 1, 0));
    }

    #[test]
    fn perfect_and_degenerate_confusions() {
        let cm = ConfusionMatrix::from_predictions(&[1, 0], &[1, 0]).unwrap();
        assert_eq!(cm.fp + cm.fn_, 0);
        let cm = ConfusionMatrix::from_predictions(&[0, 0, 0], &[1, 1, 1]).unwrap();
        assert_eq!(cm.fn_, 3);
        assert!(ConfusionMatrix::from_predictions(&[1], &[1, 0]).is_err());
        assert!(ConfusionMatrix::from_predictions(&[2], &[1]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let cm = ConfusionMatrix { tp: 1, tn: 1, fp: 0, fn_: 0 };
        assert_eq!(accuracy(&cm).unwrap(), 1.0);
        let cm = ConfusionMatrix { tp: 50, tn: 40, fp: 5, fn_: 5 };
        assert!((accuracy(&cm).unwrap() - 0.90).abs() < 1e-15);
        let cm = ConfusionMatrix { tp: 0, tn: 0, fp: 1, fn_: 1 };
        assert_eq!(accuracy(&cm).unwrap(), 0.0);
        assert!(accuracy(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn precision_recall_examples() {
        let cm = ConfusionMatrix { tp: 5, tn: 2, fp: 1, fn_: 2 };
        let (p, p_deg) = precision(&cm);
        assert!((p - 5.0 / 6.0).abs() < 1e-15 && !p_deg);
        let (r, r_deg) = recall(&cm);
        assert!((r - 5.0 / 7.0).abs() < 1e-15 && !r_deg);

        let cm = ConfusionMatrix { tp: 3, tn: 1, fp: 0, fn_: 0 };
        assert_eq!(precision(&cm).0, 1.0);
        assert_eq!(recall(&cm).0, 1.0);

        let cm = ConfusionMatrix { tp: 0, tn: 2, fp: 0, fn_: 0 };
        assert_eq!(precision(&cm), (0.0, true));
        assert_eq!(recall(&cm), (0.0, true));
    }

    #[test]
    fn f_score_examples() {
        let f = f_score(0.9400, 0.9648).unwrap();
        assert!((f - 0.9522385552288954).abs() < 1e-12);
        assert_eq!(f_score(0.7, 0.7).unwrap(), 0.7);
        assert_eq!(f_score(1.0, 0.0).unwrap(), 0.0);
        assert!(f_score(1.2, 0.5).is_err());
    }

    #[test]
    fn f_score_sits_between_min_and_arithmetic_mean() {
        for (p, r) in [(0.9, 0.1), (0.5, 0.5), (0.99, 0.7), (0.3, 0.8)] {
            let f = f_score(p, r).unwrap();
            let lo = f64::min(p, r);
            let hi = (p + r) / 2.0;
            assert!(f >= lo - 1e-15 && f <= hi + 1e-15, "p={p} r={r} f={f}");
        }
    }

    #[test]
    fn accuracy_is_class_relabel_symmetric() {
        let cm = ConfusionMatrix { tp: 7, tn: 11, fp: 3, fn_: 5 };
        let swapped = ConfusionMatrix { tp: cm.tn, tn: cm.tp, fp: cm.fn_, fn_: cm.fp };
        assert_eq!(accuracy(&cm).unwrap(), accuracy(&swapped).unwrap());
    }

    #[test]
    fn report_is_internally_consistent() {
        let cm = ConfusionMatrix { tp: 5, tn: 2, fp: 1, fn_: 2 };
        let report = MetricsReport::from_confusion(cm, RunMeta::default()).unwrap();
        assert_eq!(report.f1, f_score(report.precision, report.recall).unwrap());
        assert!((report.accuracy - accuracy(&cm).unwrap()).abs() < 1e-12);
        let text = report.to_string();
        assert!(text.contains("accuracy: 0.7000"), "got: {text}");
    }
}
