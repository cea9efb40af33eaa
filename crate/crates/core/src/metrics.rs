//! Evaluation: confusion-count metrics at a fixed threshold plus exact
//! rank-based AUC.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::classify;

/// Area under the ROC curve via the Mann-Whitney rank statistic. Tied
/// scores share their average rank, so a tie between a positive and a
/// negative counts one half. Returns None when only one class is present.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "score and label counts differ");
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Rank sum of positives, averaging ranks inside each tie group.
    // Every term is a multiple of one half, so the sum is exact.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] == 1 {
                rank_sum += avg_rank;
            }
        }
        i = j;
    }
    Some((rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub f1: f64,
    pub accuracy: f64,
    /// None when the labels hold a single class, which leaves AUC
    /// undefined; serialized as null.
    pub auc: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub r#fn: usize,
    pub n: usize,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Thresholded confusion metrics plus AUC. Precision or recall with an
/// empty denominator counts as 0, and F1 is 0 when both are.
pub fn evaluate(scores: &[f64], labels: &[u8], threshold: f64) -> Result<EvalReport> {
    if scores.is_empty() {
        return Err(Error::Data("cannot evaluate zero pairs".to_string()));
    }
    if scores.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Data(format!("labels must be 0 or 1, found {bad}")));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&score, &label) in scores.iter().zip(labels) {
        match (classify(score, threshold), label) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 0) => tn += 1,
            _ => fn_ += 1,
        }
    }
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(EvalReport {
        f1,
        accuracy: (tp + tn) as f64 / scores.len() as f64,
        auc: roc_auc(scores, labels),
        tp,
        fp,
        tn,
        r#fn: fn_,
        n: scores.len(),
    })
}

/// One cell of the label-ratio sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub ratio: f64,
    pub external: bool,
    pub auc: f64,
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| Error::io(path, e);
    writeln!(w, "ratio,external,auc").map_err(io)?;
    for row in rows {
        writeln!(w, "{},{},{}", row.ratio, row.external, row.auc).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force AUC: fraction of positive-negative pairs where the
    /// positive outranks the negative, ties worth one half.
    fn auc_by_enumeration(scores: &[f64], labels: &[u8]) -> Option<f64> {
        let pos: Vec<f64> = scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == 1)
            .map(|(&s, _)| s)
            .collect();
        let neg: Vec<f64> = scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == 0)
            .map(|(&s, _)| s)
            .collect();
        if pos.is_empty() || neg.is_empty() {
            return None;
        }
        let mut numerator = 0.0;
        for &p in &pos {
            for &n in &neg {
                if p > n {
                    numerator += 1.0;
                } else if p == n {
                    numerator += 0.5;
                }
            }
        }
        Some(numerator / (pos.len() * neg.len()) as f64)
    }

    #[test]
    fn one_concordant_one_discordant_gives_half() {
        let auc = roc_auc(&[0.9, 0.6, 0.4], &[1, 0, 1]).unwrap();
        assert_eq!(auc, 0.5);
    }

    #[test]
    fn perfect_separation_is_all_ones() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let labels = [1, 1, 0, 0];
        let report = evaluate(&scores, &labels, 0.5).unwrap();
        assert_eq!(report.f1, 1.0);
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.auc, Some(1.0));
        assert_eq!((report.tp, report.fp, report.tn, report.r#fn), (2, 0, 2, 0));
    }

    #[test]
    fn confusion_count_formulas() {
        // 8 true positives, 2 false positives, 2 false negatives,
        // 8 true negatives: P = R = 0.8, so F1 = 0.8 and ACC = 0.8.
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        scores.extend(std::iter::repeat(0.9).take(8)); // TP
        labels.extend(std::iter::repeat(1).take(8));
        scores.extend(std::iter::repeat(0.9).take(2)); // FP
        labels.extend(std::iter::repeat(0).take(2));
        scores.extend(std::iter::repeat(0.1).take(2)); // FN
        labels.extend(std::iter::repeat(1).take(2));
        scores.extend(std::iter::repeat(0.1).take(8)); // TN
        labels.extend(std::iter::repeat(0).take(8));
        let report = evaluate(&scores, &labels, 0.5).unwrap();
        assert!((report.f1 - 0.8).abs() < 1e-15);
        assert!((report.accuracy - 0.8).abs() < 1e-15);
        assert_eq!((report.tp, report.fp, report.tn, report.r#fn), (8, 2, 8, 2));
        assert_eq!(report.tp + report.fp + report.tn + report.r#fn, report.n);
    }

    #[test]
    fn single_class_has_no_auc_but_other_metrics() {
        let report = evaluate(&[0.9, 0.8], &[1, 1], 0.5).unwrap();
        assert_eq!(report.auc, None);
        assert_eq!(report.accuracy, 1.0);
        assert!(report.to_json().contains("\"auc\": null"));
    }

    #[test]
    fn all_negative_predictions_zero_f1() {
        let report = evaluate(&[0.1, 0.2, 0.3], &[1, 0, 1], 0.5).unwrap();
        assert_eq!(report.tp, 0);
        assert_eq!(report.f1, 0.0);
    }

    #[test]
    fn threshold_is_strict() {
        let report = evaluate(&[0.5], &[1], 0.5).unwrap();
        assert_eq!(report.tp, 0);
        assert_eq!(report.r#fn, 1);
    }

    #[test]
    fn labels_as_scores_are_perfectly_accurate() {
        let labels = [1u8, 0, 1, 1, 0];
        let scores: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
        let report = evaluate(&scores, &labels, 0.5).unwrap();
        assert_eq!(report.accuracy, 1.0);
    }

    #[test]
    fn mismatched_or_empty_inputs_error() {
        assert!(evaluate(&[], &[], 0.5).is_err());
        assert!(evaluate(&[0.5], &[1, 0], 0.5).is_err());
        assert!(evaluate(&[0.5], &[2], 0.5).is_err());
    }

    #[test]
    fn report_json_round_trips() {
        let report = evaluate(&[0.9, 0.1], &[1, 0], 0.5).unwrap();
        let parsed: EvalReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(parsed, report);
        assert!(report.to_json().contains("\"fn\""));
    }

    #[test]
    fn sweep_csv_has_header_even_when_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        write_sweep_csv(&path, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "ratio,external,auc\n");
        write_sweep_csv(
            &path,
            &[SweepRow {
                ratio: 0.5,
                external: true,
                auc: 0.75,
            }],
        )
        .unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "ratio,external,auc\n0.5,true,0.75\n"
        );
    }

    proptest! {
        /// Rank-based AUC agrees exactly with pair enumeration.
        #[test]
        fn auc_matches_enumeration(
            pairs in prop::collection::vec((0u32..100, 0u8..2), 2..200)
        ) {
            // Coarse score grid to force plenty of ties.
            let scores: Vec<f64> = pairs.iter().map(|&(s, _)| s as f64 / 100.0).collect();
            let labels: Vec<u8> = pairs.iter().map(|&(_, l)| l).collect();
            prop_assert_eq!(roc_auc(&scores, &labels), auc_by_enumeration(&scores, &labels));
        }

        /// AUC only depends on score order, so any strictly monotone
        /// transform leaves it unchanged.
        #[test]
        fn auc_is_rank_invariant(
            pairs in prop::collection::vec((0u32..50, 0u8..2), 2..100)
        ) {
            let scores: Vec<f64> = pairs.iter().map(|&(s, _)| s as f64).collect();
            let labels: Vec<u8> = pairs.iter().map(|&(_, l)| l).collect();
            let squashed: Vec<f64> = scores.iter().map(|&s| 1.0 / (1.0 + (-0.1 * s).exp())).collect();
            prop_assert_eq!(roc_auc(&scores, &labels), roc_auc(&squashed, &labels));
        }

        /// Confusion metrics ignore sample order.
        #[test]
        fn metrics_are_permutation_invariant(
            pairs in prop::collection::vec((0u32..100, 0u8..2), 1..100),
            rotate in 0usize..100,
        ) {
            let scores: Vec<f64> = pairs.iter().map(|&(s, _)| s as f64 / 100.0).collect();
            let labels: Vec<u8> = pairs.iter().map(|&(_, l)| l).collect();
            let base = evaluate(&scores, &labels, 0.5).unwrap();
            let k = rotate % scores.len();
            let mut s2 = scores.clone();
            s2.rotate_left(k);
            let mut l2 = labels.clone();
            l2.rotate_left(k);
            prop_assert_eq!(evaluate(&s2, &l2, 0.5).unwrap(), base);
        }
    }
}
