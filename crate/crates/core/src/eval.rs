//! Threshold metrics and ROC AUC.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the labels contain a single class.
    pub auc: Option<f64>,
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Precision had no predicted positives and was reported as 0.
    pub precision_undefined: bool,
    /// Recall had no actual positives and was reported as 0.
    pub recall_undefined: bool,
}

fn check(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Validation("no scores to evaluate".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Validation(format!("label {l} is not binary")));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Validation(format!("score {s} is not a number")));
    }
    Ok(())
}

/// Accuracy, precision, recall and F1, predicting 1 iff `score ≥ threshold`.
/// The returned report has `auc: None`.
pub fn threshold_metrics(scores: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsReport> {
    check(scores, labels)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(MetricsReport {
        accuracy: ratio(tp + tn, scores.len()),
        precision,
        recall,
        f1,
        auc: None,
        threshold,
        tp,
        fp,
        tn,
        fn_,
        precision_undefined: tp + fp == 0,
        recall_undefined: tp + fn_ == 0,
    })
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from tie-averaged ranks.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes, got {n_pos} positives and {n_neg} negatives"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        pos_rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Threshold metrics plus AUC when it is defined.
pub fn evaluate(scores: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsReport> {
    let mut report = threshold_metrics(scores, labels, threshold)?;
    report.auc = match roc_auc(scores, labels) {
        Ok(a) => Some(a),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(report)
}

impl MetricsReport {
    /// Aligned two-column table.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(&str, String)> = vec![
            ("accuracy", format!("{:.4}", self.accuracy)),
            (
                "precision",
                format!(
                    "{:.4}{}",
                    self.precision,
                    if self.precision_undefined {
                        " (undefined)"
                    } else {
                        ""
                    }
                ),
            ),
            (
                "recall",
                format!(
                    "{:.4}{}",
                    self.recall,
                    if self.recall_undefined {
                        " (undefined)"
                    } else {
                        ""
                    }
                ),
            ),
            ("f1", format!("{:.4}", self.f1)),
            (
                "auc",
                self.auc.map_or("undefined".into(), |a| format!("{a:.4}")),
            ),
            ("threshold", format!("{}", self.threshold)),
        ];
        rows.push((
            "tp/fp/tn/fn",
            format!("{}/{}/{}/{}", self.tp, self.fp, self.tn, self.fn_),
        ));
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (i, &l) in labels.iter().enumerate() {
            for (j, &m) in labels.iter().enumerate() {
                if l == 1 && m == 0 {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn threshold_examples() {
        let r = threshold_metrics(&[0.9, 0.1], &[1, 0], 0.5).unwrap();
        assert_eq!(
            (r.accuracy, r.precision, r.recall, r.f1),
            (1.0, 1.0, 1.0, 1.0)
        );

        let r = threshold_metrics(&[0.7, 0.8, 0.6, 0.9], &[1, 0, 1, 0], 0.5).unwrap();
        assert_eq!((r.accuracy, r.recall), (0.5, 1.0));

        let r = threshold_metrics(&[0.6, 0.6, 0.4], &[1, 0, 1], 0.5).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_, r.tn), (1, 1, 1, 0));
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));

        let r = threshold_metrics(&[0.1, 0.2], &[0, 0], 0.5).unwrap();
        assert!(r.precision_undefined && r.recall_undefined);
        assert_eq!(r.f1, 0.0);
        assert!(r.to_table().contains("(undefined)"));
        assert!(threshold_metrics(&[], &[], 0.5).is_err());
        assert!(threshold_metrics(&[0.5], &[1, 0], 0.5).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.7, 0.6], &[1, 0, 1, 0]).unwrap(), 0.75);
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[1, 1]),
            Err(Error::UndefinedMetric(_))
        ));
        let r = evaluate(&[0.1, 0.2], &[1, 1], 0.5).unwrap();
        assert_eq!(r.auc, None);
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (2usize..200).prop_flat_map(|n| {
            (
                prop::collection::vec((0u8..20).prop_map(|s| s as f64 / 20.0), n),
                prop::collection::vec(0u8..2, n),
            )
        })
    }

    proptest! {
        #[test]
        fn auc_matches_pair_count((scores, labels) in instance()) {
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), brute_auc(&scores, &labels));
        }

        #[test]
        fn auc_invariant_under_monotone_transform((scores, labels) in instance()) {
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let t: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), roc_auc(&t, &labels).unwrap());
        }

        #[test]
        fn auc_complement(labels in prop::collection::vec(0u8..2, 2..100)) {
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let scores: Vec<f64> = (0..labels.len()).map(|i| (i as f64 * 0.618).fract()).collect();
            let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
            let sum = roc_auc(&scores, &labels).unwrap() + roc_auc(&scores, &flipped).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
