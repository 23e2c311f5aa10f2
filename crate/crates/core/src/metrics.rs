//! HOTA-family evaluation of predicted mask tracks against ground truth.
//!
//! For each localization threshold `alpha` in `{0.05, 0.10, ..., 0.95}` every
//! frame is matched independently: the largest set of GT/prediction pairs with
//! IOU >= alpha, maximizing the IOU sum among those. Detection and association
//! scores follow from the matches; top-level values average over alpha.
//! ID switches are counted once, at alpha = 0.5.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::solve_assignment;
use crate::mask::{mask_iou, BinaryMask, MaskError};
use crate::matrix::Matrix;

pub const ALPHA_STEPS: usize = 19;

/// `alpha_k = k / 20` for `k = 1..=19`.
pub fn alphas() -> impl Iterator<Item = f64> {
    (1..=ALPHA_STEPS).map(|k| k as f64 / 20.0)
}

/// Index of alpha = 0.5 in [`alphas`].
const IDS_ALPHA_INDEX: usize = 9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("sequences have {gt} and {pred} frames")]
    FrameCountMismatch { gt: usize, pred: usize },
    #[error("id {id} appears twice in frame {frame}")]
    DuplicateId { frame: usize, id: u64 },
    #[error("mask in frame {frame} is {got:?}, sequence is {expected:?}")]
    WrongDimensions { frame: usize, expected: (u32, u32), got: (u32, u32) },
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// Per-frame `(identity, mask)` lists sharing one image size.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledSequence {
    pub width: u32,
    pub height: u32,
    pub frames: Vec<Vec<(u64, BinaryMask)>>,
}

impl LabeledSequence {
    pub fn new(width: u32, height: u32, frames: Vec<Vec<(u64, BinaryMask)>>) -> Result<Self, MetricsError> {
        let seq = Self { width, height, frames };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        for (frame, items) in self.frames.iter().enumerate() {
            for (k, (id, mask)) in items.iter().enumerate() {
                if items[..k].iter().any(|(other, _)| other == id) {
                    return Err(MetricsError::DuplicateId { frame, id: *id });
                }
                if (mask.width(), mask.height()) != (self.width, self.height) {
                    return Err(MetricsError::WrongDimensions {
                        frame,
                        expected: (self.width, self.height),
                        got: (mask.width(), mask.height()),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn detection_count(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AlphaMetrics {
    pub alpha: f64,
    pub hota: f64,
    pub det_a: f64,
    pub ass_a: f64,
    pub det_re: f64,
    pub det_pr: f64,
    pub ass_re: f64,
    pub ass_pr: f64,
    pub loc_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub hota: f64,
    pub det_a: f64,
    pub ass_a: f64,
    pub det_re: f64,
    pub det_pr: f64,
    pub ass_re: f64,
    pub ass_pr: f64,
    pub loc_a: f64,
    pub ids: u64,
    pub per_alpha: Vec<AlphaMetrics>,
}

/// Max-cardinality, max-IOU-sum matching restricted to `iou >= alpha`.
/// Rows index GT, columns predictions.
pub fn match_ious(iou: &Matrix, alpha: f64) -> Vec<(usize, usize)> {
    let (n, m) = iou.shape();
    if n == 0 || m == 0 {
        return Vec::new();
    }
    let mut cost = Matrix::filled(n, m, f64::INFINITY);
    let mut any = false;
    for i in 0..n {
        for j in 0..m {
            let v = iou[(i, j)];
            if v >= alpha && v > 0.0 {
                cost[(i, j)] = -v;
                any = true;
            }
        }
    }
    if !any {
        return Vec::new();
    }
    solve_assignment(&cost).map(|r| r.pairs).unwrap_or_default()
}

fn iou_matrix(gt: &[&BinaryMask], pred: &[&BinaryMask]) -> Result<Matrix, MaskError> {
    let mut m = Matrix::zeros(gt.len(), pred.len());
    for (i, g) in gt.iter().enumerate() {
        for (j, p) in pred.iter().enumerate() {
            m[(i, j)] = mask_iou(g, p)?;
        }
    }
    Ok(m)
}

/// Matched `(gt index, pred index, iou)` triples of one frame.
pub fn match_frame(
    gt: &[BinaryMask],
    pred: &[BinaryMask],
    alpha: f64,
) -> Result<Vec<(usize, usize, f64)>, MetricsError> {
    let iou = iou_matrix(&gt.iter().collect::<Vec<_>>(), &pred.iter().collect::<Vec<_>>())?;
    Ok(match_ious(&iou, alpha).into_iter().map(|(i, j)| (i, j, iou[(i, j)])).collect())
}

fn ratio(num: f64, den: f64, both_empty: bool) -> f64 {
    if den > 0.0 {
        num / den
    } else if both_empty {
        1.0
    } else {
        0.0
    }
}

pub fn evaluate(gt: &LabeledSequence, pred: &LabeledSequence) -> Result<MetricsReport, MetricsError> {
    if gt.len() != pred.len() {
        return Err(MetricsError::FrameCountMismatch { gt: gt.len(), pred: pred.len() });
    }
    gt.validate()?;
    pred.validate()?;

    let mut gt_sizes: BTreeMap<u64, f64> = BTreeMap::new();
    let mut pred_sizes: BTreeMap<u64, f64> = BTreeMap::new();
    let mut ious = Vec::with_capacity(gt.len());
    for (g, p) in gt.frames.iter().zip(&pred.frames) {
        for (id, _) in g {
            *gt_sizes.entry(*id).or_default() += 1.0;
        }
        for (id, _) in p {
            *pred_sizes.entry(*id).or_default() += 1.0;
        }
        let gm: Vec<&BinaryMask> = g.iter().map(|(_, m)| m).collect();
        let pm: Vec<&BinaryMask> = p.iter().map(|(_, m)| m).collect();
        ious.push(iou_matrix(&gm, &pm)?);
    }
    let n_gt = gt.detection_count() as f64;
    let n_pred = pred.detection_count() as f64;
    let both_empty = n_gt == 0.0 && n_pred == 0.0;

    let mut per_alpha = Vec::with_capacity(ALPHA_STEPS);
    let mut ids = 0u64;
    for (k, alpha) in alphas().enumerate() {
        let mut pair_counts: BTreeMap<(u64, u64), f64> = BTreeMap::new();
        let mut tp = 0.0;
        let mut iou_sum = 0.0;
        let mut last_pred: BTreeMap<u64, u64> = BTreeMap::new();
        for (f, iou) in ious.iter().enumerate() {
            for (i, j) in match_ious(iou, alpha) {
                let g_id = gt.frames[f][i].0;
                let p_id = pred.frames[f][j].0;
                *pair_counts.entry((g_id, p_id)).or_default() += 1.0;
                tp += 1.0;
                iou_sum += iou[(i, j)];
                if k == IDS_ALPHA_INDEX {
                    if let Some(prev) = last_pred.insert(g_id, p_id) {
                        if prev != p_id {
                            ids += 1;
                        }
                    }
                }
            }
        }
        let fn_ = n_gt - tp;
        let fp = n_pred - tp;
        let (mut ass, mut ass_re, mut ass_pr) = (0.0, 0.0, 0.0);
        for (&(g, p), &n) in &pair_counts {
            let g_len = gt_sizes[&g];
            let p_len = pred_sizes[&p];
            // each of the n TPs of this id pair scores the same
            ass += n * n / (g_len + p_len - n);
            ass_re += n * n / g_len;
            ass_pr += n * n / p_len;
        }
        let det_a = ratio(tp, tp + fn_ + fp, both_empty);
        let ass_a = ratio(ass, tp, both_empty);
        per_alpha.push(AlphaMetrics {
            alpha,
            hota: libm::sqrt(det_a * ass_a),
            det_a,
            ass_a,
            det_re: ratio(tp, tp + fn_, both_empty),
            det_pr: ratio(tp, tp + fp, both_empty),
            ass_re: ratio(ass_re, tp, both_empty),
            ass_pr: ratio(ass_pr, tp, both_empty),
            loc_a: ratio(iou_sum, tp, both_empty),
        });
    }

    let mean = |f: fn(&AlphaMetrics) -> f64| per_alpha.iter().map(f).sum::<f64>() / ALPHA_STEPS as f64;
    Ok(MetricsReport {
        hota: mean(|a| a.hota),
        det_a: mean(|a| a.det_a),
        ass_a: mean(|a| a.ass_a),
        det_re: mean(|a| a.det_re),
        det_pr: mean(|a| a.det_pr),
        ass_re: mean(|a| a.ass_re),
        ass_pr: mean(|a| a.ass_pr),
        loc_a: mean(|a| a.loc_a),
        ids,
        per_alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::vec;

    fn rect(x0: i64, w: i64) -> BinaryMask {
        BinaryMask::from_row_spans(40, 10, (0..5).map(|y| (y, x0, x0 + w))).unwrap()
    }

    #[test]
    fn alpha_grid() {
        let a: Vec<f64> = alphas().collect();
        assert_eq!(a.len(), 19);
        assert_eq!(a[0], 0.05);
        assert_eq!(a[IDS_ALPHA_INDEX], 0.5);
        assert_eq!(a[18], 0.95);
    }

    #[test]
    fn identical_sets_fully_matched() {
        let masks = vec![rect(0, 5), rect(10, 5)];
        let m = match_frame(&masks, &masks, 0.5).unwrap();
        assert_eq!(m, vec![(0, 0, 1.0), (1, 1, 1.0)]);
    }

    #[test]
    fn empty_prediction_matches_nothing() {
        assert!(match_frame(&[rect(0, 5)], &[], 0.5).unwrap().is_empty());
    }

    #[test]
    fn cross_iou_picks_diagonal() {
        let iou = Matrix::from_rows(&[vec![0.9, 0.2], vec![0.2, 0.9]]);
        assert_eq!(match_ious(&iou, 0.5), vec![(0, 0), (1, 1)]);
        assert!(match_ious(&Matrix::from_rows(&[vec![0.4]]), 0.5).is_empty());
    }

    #[test]
    fn perfect_prediction() {
        let frames = (0..5).map(|f| vec![(1, rect(f, 5)), (2, rect(20 + f, 5))]).collect();
        let gt = LabeledSequence::new(40, 10, frames).unwrap();
        let r = evaluate(&gt, &gt).unwrap();
        for v in [r.hota, r.det_a, r.ass_a, r.det_re, r.det_pr, r.ass_re, r.ass_pr, r.loc_a] {
            assert_eq!(v, 1.0);
        }
        assert_eq!(r.ids, 0);
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let gt = LabeledSequence::new(40, 10, vec![vec![(1, rect(0, 5))]; 3]).unwrap();
        let pred = LabeledSequence::new(40, 10, vec![vec![]; 3]).unwrap();
        let r = evaluate(&gt, &pred).unwrap();
        assert_eq!(r.det_a, 0.0);
        assert_eq!(r.hota, 0.0);
    }

    #[test]
    fn both_empty_scores_one() {
        let e = LabeledSequence::new(40, 10, vec![vec![]; 3]).unwrap();
        assert_eq!(evaluate(&e, &e).unwrap().hota, 1.0);
    }

    #[test]
    fn frame_count_mismatch() {
        let a = LabeledSequence::new(40, 10, vec![vec![]; 3]).unwrap();
        let b = LabeledSequence::new(40, 10, vec![vec![]; 2]).unwrap();
        assert_eq!(evaluate(&a, &b), Err(MetricsError::FrameCountMismatch { gt: 3, pred: 2 }));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let r = LabeledSequence::new(40, 10, vec![vec![(1, rect(0, 5)), (1, rect(10, 5))]]);
        assert_eq!(r, Err(MetricsError::DuplicateId { frame: 0, id: 1 }));
    }
}
