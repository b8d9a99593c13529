//! Confusion-matrix IoU/mIoU, 2D+3D softmax-average ensembling, and the
//! domain-gap bookkeeping statistics.

use crate::error::{Error, Result};
use crate::io::mapping::IGNORE;

/// `C x C` counts, rows = ground truth, columns = prediction; ignored points
/// never enter.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self { num_classes, counts: vec![0; num_classes * num_classes] }
    }

    pub fn count(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Tally `(label, prediction)` pairs, skipping ignored labels.
    pub fn accumulate(&mut self, predictions: &[u32], labels: &[u32]) -> Result<()> {
        if predictions.len() != labels.len() {
            return Err(Error::ShapeError(format!(
                "accumulate: {} predictions vs {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        for (&p, &l) in predictions.iter().zip(labels) {
            if l == IGNORE {
                continue;
            }
            if (l as usize) >= self.num_classes || (p as usize) >= self.num_classes {
                return Err(Error::ShapeError(format!(
                    "accumulate: pair ({l}, {p}) outside {} classes",
                    self.num_classes
                )));
            }
            self.counts[l as usize * self.num_classes + p as usize] += 1;
        }
        Ok(())
    }

    /// Merge another matrix (per-thread accumulation is additive).
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        debug_assert_eq!(self.num_classes, other.num_classes);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

/// Per-class IoU (`None` where gt and prediction are both empty) and the mean
/// over defined classes.
#[derive(Debug, Clone, PartialEq)]
pub struct IouReport {
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

/// `IoU_c = TP / (TP + FP + FN)`; classes with an empty union are excluded
/// from the mean.
pub fn iou(cm: &ConfusionMatrix) -> Result<IouReport> {
    if cm.total() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let c = cm.num_classes;
    let mut per_class = Vec::with_capacity(c);
    let mut sum = 0.0;
    let mut defined = 0usize;
    for k in 0..c {
        let tp = cm.count(k, k);
        let fp: u64 = (0..c).filter(|&r| r != k).map(|r| cm.count(r, k)).sum();
        let fn_: u64 = (0..c).filter(|&p| p != k).map(|p| cm.count(k, p)).sum();
        let denom = tp + fp + fn_;
        if denom == 0 {
            per_class.push(None);
        } else {
            let v = tp as f64 / denom as f64;
            per_class.push(Some(v));
            sum += v;
            defined += 1;
        }
    }
    if defined == 0 {
        return Err(Error::EmptyMatrix);
    }
    Ok(IouReport { per_class, mean: sum / defined as f64 })
}

/// Elementwise mean of two `[N, C]` probability row sets; rows stay
/// normalized.
pub fn ensemble(p2d: &[f64], p3d: &[f64], num_classes: usize) -> Result<Vec<f64>> {
    if p2d.len() != p3d.len() || num_classes == 0 || p2d.len() % num_classes != 0 {
        return Err(Error::ShapeError(format!(
            "ensemble: {} vs {} values over {num_classes} classes",
            p2d.len(),
            p3d.len()
        )));
    }
    Ok(p2d.iter().zip(p3d).map(|(a, b)| 0.5 * (a + b)).collect())
}

/// Row-wise argmax over `[N, C]` probabilities.
pub fn argmax_rows(probs: &[f64], num_classes: usize) -> Vec<u32> {
    probs
        .chunks_exact(num_classes)
        .map(|row| {
            let mut best = 0usize;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best as u32
        })
        .collect()
}

/// The three bookkeeping statistics derived from baseline/method/oracle mIoU.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DomainStats {
    pub unsupervised_advantage: f64,
    pub domain_gap: f64,
    pub closed_gap_percent: f64,
}

/// `advantage = method - baseline`, `gap = oracle - baseline`,
/// `closed = 100 * advantage / gap`.
pub fn domain_stats(baseline_miou: f64, method_miou: f64, oracle_miou: f64) -> Result<DomainStats> {
    let unsupervised_advantage = method_miou - baseline_miou;
    let domain_gap = oracle_miou - baseline_miou;
    if domain_gap == 0.0 {
        return Err(Error::DegenerateGap);
    }
    Ok(DomainStats {
        unsupervised_advantage,
        domain_gap,
        closed_gap_percent: 100.0 * unsupervised_advantage / domain_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_make_a_diagonal_matrix() {
        let mut cm = ConfusionMatrix::new(3);
        cm.accumulate(&[0, 1, 2, 1], &[0, 1, 2, 1]).unwrap();
        for gt in 0..3 {
            for pred in 0..3 {
                assert_eq!(cm.count(gt, pred), if gt == pred { [1, 2, 1][gt] } else { 0 });
            }
        }
        let report = iou(&cm).unwrap();
        assert_eq!(report.mean, 1.0);
        assert!(report.per_class.iter().all(|c| *c == Some(1.0)));
    }

    #[test]
    fn ignored_labels_leave_the_matrix_unchanged() {
        let mut cm = ConfusionMatrix::new(3);
        cm.accumulate(&[0, 1], &[IGNORE, IGNORE]).unwrap();
        assert_eq!(cm.total(), 0);
    }

    #[test]
    fn counts_match_a_pair_tally_oracle() {
        let preds: Vec<u32> = (0..200).map(|i| (i * 7 % 4) as u32).collect();
        let labels: Vec<u32> =
            (0..200).map(|i| if i % 9 == 0 { IGNORE } else { (i * 3 % 4) as u32 }).collect();
        let mut cm = ConfusionMatrix::new(4);
        cm.accumulate(&preds, &labels).unwrap();
        for gt in 0..4u32 {
            for pred in 0..4u32 {
                let expected = preds
                    .iter()
                    .zip(&labels)
                    .filter(|&(&p, &l)| l == gt && p == pred)
                    .count() as u64;
                assert_eq!(cm.count(gt as usize, pred as usize), expected);
            }
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let mut cm = ConfusionMatrix::new(2);
        assert!(matches!(cm.accumulate(&[0], &[0, 1]), Err(Error::ShapeError(_))));
    }

    #[test]
    fn two_class_uniform_matrix_gives_one_third_iou() {
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap();
        let report = iou(&cm).unwrap();
        // [[1,1],[1,1]]: each class IoU = 1 / 3
        assert!((report.per_class[0].unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((report.per_class[1].unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((report.mean - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn absent_class_is_excluded_from_the_mean() {
        let mut cm = ConfusionMatrix::new(3);
        cm.accumulate(&[0, 0, 1], &[0, 0, 1]).unwrap();
        let report = iou(&cm).unwrap();
        assert_eq!(report.per_class[2], None);
        assert_eq!(report.mean, 1.0);
    }

    #[test]
    fn empty_matrix_is_rejected() {
        let cm = ConfusionMatrix::new(3);
        assert!(matches!(iou(&cm), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn iou_commutes_with_class_permutation() {
        let preds: Vec<u32> = (0..120).map(|i| (i * 5 % 3) as u32).collect();
        let labels: Vec<u32> = (0..120).map(|i| (i * 2 % 3) as u32).collect();
        let mut cm = ConfusionMatrix::new(3);
        cm.accumulate(&preds, &labels).unwrap();
        let base = iou(&cm).unwrap();

        // permutation. 0 -> 1 -> 2 -> 0
        let perm = |v: u32| (v + 1) % 3;
        let mut cm_p = ConfusionMatrix::new(3);
        let preds_p: Vec<u32> = preds.iter().map(|&v| perm(v)).collect();
        let labels_p: Vec<u32> = labels.iter().map(|&v| perm(v)).collect();
        cm_p.accumulate(&preds_p, &labels_p).unwrap();
        let permuted = iou(&cm_p).unwrap();
        for k in 0..3 {
            assert_eq!(base.per_class[k], permuted.per_class[perm(k as u32) as usize]);
        }
        assert!((base.mean - permuted.mean).abs() < 1e-12);
    }

    #[test]
    fn merge_equals_joint_accumulation() {
        let mut a = ConfusionMatrix::new(2);
        let mut b = ConfusionMatrix::new(2);
        a.accumulate(&[0, 1], &[0, 0]).unwrap();
        b.accumulate(&[1, 1], &[1, 0]).unwrap();
        let mut joint = ConfusionMatrix::new(2);
        joint.accumulate(&[0, 1, 1, 1], &[0, 0, 1, 0]).unwrap();
        a.merge(&b);
        assert_eq!(a, joint);
    }

    #[test]
    fn ensemble_is_the_elementwise_mean_and_stays_normalized() {
        let p2d = vec![0.6, 0.4, 0.2, 0.8];
        let p3d = vec![0.2, 0.8, 0.6, 0.4];
        let e = ensemble(&p2d, &p3d, 2).unwrap();
        assert_eq!(e, vec![0.4, 0.6, 0.4, 0.6]);
        for row in e.chunks_exact(2) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // argmax of the first ensembled row ([0.4, 0.6]) picks class 1
        assert_eq!(argmax_rows(&e, 2), vec![1, 1]);
        // idempotent on equal inputs
        assert_eq!(ensemble(&p2d, &p2d, 2).unwrap(), p2d);
    }

    #[test]
    fn ensemble_is_bounded_by_its_inputs() {
        let p2d = vec![0.1, 0.9, 0.5, 0.5];
        let p3d = vec![0.3, 0.7, 0.9, 0.1];
        let e = ensemble(&p2d, &p3d, 2).unwrap();
        for i in 0..e.len() {
            assert!(e[i] >= p2d[i].min(p3d[i]) && e[i] <= p2d[i].max(p3d[i]));
        }
    }

    #[test]
    fn domain_stats_reproduce_published_example_cells() {
        // ensemble column: baseline 61.3, method 68.9, oracle 71.6
        let s = domain_stats(61.3, 68.9, 71.6).unwrap();
        assert!((s.unsupervised_advantage - 7.6).abs() < 0.05);
        assert!((s.domain_gap - 10.3).abs() < 0.05);
        assert!((s.closed_gap_percent - 73.8).abs() < 0.05);

        // 3D column of the sensor-change scenario
        let s = domain_stats(54.9, 70.7, 76.0).unwrap();
        assert!((s.unsupervised_advantage - 15.8).abs() < 0.05);
        assert!((s.domain_gap - 21.1).abs() < 0.05);
        assert!((s.closed_gap_percent - 74.9).abs() < 0.05);
    }

    #[test]
    fn method_equal_to_baseline_closes_nothing() {
        let s = domain_stats(50.0, 50.0, 60.0).unwrap();
        assert_eq!(s.unsupervised_advantage, 0.0);
        assert_eq!(s.closed_gap_percent, 0.0);
    }

    #[test]
    fn oracle_equal_to_baseline_is_degenerate() {
        assert!(matches!(domain_stats(50.0, 55.0, 50.0), Err(Error::DegenerateGap)));
    }
}
