//! Pairwise affinity between two frames' embeddings.
//!
//! Raw scores `T'` (rows: instances at `t - n`, columns: instances at `t`) are
//! padded with a constant entry/exit score `gamma`:
//!
//! - `m_fw` gains a last row: "this frame-`t` detection entered".
//! - `m_rv` gains a last column: "this frame-`t - n` instance exited".
//!
//! `p_fw` is the column softmax of `m_fw` and `p_rv` the row softmax of
//! `m_rv`. The association losses are evaluated on these as plain functions;
//! nothing here computes gradients.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingMatrix;
use crate::matrix::Matrix;

/// Probabilities are clamped here before taking logs.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AffinityError {
    #[error("embedding matrices disagree: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("matrix shape {actual:?} does not match {expected:?}")]
    ShapeMismatch { expected: (usize, usize), actual: (usize, usize) },
    #[error("no ground-truth pairs")]
    NoGroundTruth,
    #[error("invalid ground-truth association: {0}")]
    InvalidAssociation(&'static str),
}

/// Scores one instance pair. Larger means more alike.
pub trait AffinityScorer {
    fn score(&self, prev: &[f64], cur: &[f64]) -> f64;
}

/// `scale * cos(prev, cur)`; zero when either vector is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineScorer {
    pub scale: f64,
}

impl Default for CosineScorer {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

impl AffinityScorer for CosineScorer {
    fn score(&self, prev: &[f64], cur: &[f64]) -> f64 {
        let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
        for (a, b) in prev.iter().zip(cur) {
            dot += a * b;
            na += a * a;
            nb += b * b;
        }
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        self.scale * dot / (libm::sqrt(na) * libm::sqrt(nb))
    }
}

/// `-scale * |prev - cur|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegSqEuclideanScorer {
    pub scale: f64,
}

impl Default for NegSqEuclideanScorer {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

impl AffinityScorer for NegSqEuclideanScorer {
    fn score(&self, prev: &[f64], cur: &[f64]) -> f64 {
        -self.scale * prev.iter().zip(cur).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    }
}

/// Config-selectable scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    #[default]
    Cosine,
    NegSqEuclidean,
}

impl ScorerKind {
    pub fn with_scale(self, scale: f64) -> ScaledScorer {
        match self {
            ScorerKind::Cosine => ScaledScorer::Cosine(CosineScorer { scale }),
            ScorerKind::NegSqEuclidean => ScaledScorer::NegSqEuclidean(NegSqEuclideanScorer { scale }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaledScorer {
    Cosine(CosineScorer),
    NegSqEuclidean(NegSqEuclideanScorer),
}

impl AffinityScorer for ScaledScorer {
    fn score(&self, prev: &[f64], cur: &[f64]) -> f64 {
        match self {
            ScaledScorer::Cosine(s) => s.score(prev, cur),
            ScaledScorer::NegSqEuclidean(s) => s.score(prev, cur),
        }
    }
}

/// Raw scores, padded scores and their probabilities for one frame pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityResult {
    pub t_prime: Matrix,
    pub m_fw: Matrix,
    pub m_rv: Matrix,
    pub p_fw: Matrix,
    pub p_rv: Matrix,
}

/// `N_m x N_m` raw scores; entry `(i, j)` scores column `i` of `e_prev`
/// against column `j` of `e_t`. Pairs touching padding score 0.
pub fn affinity_scores(
    e_t: &EmbeddingMatrix,
    e_prev: &EmbeddingMatrix,
    scorer: &impl AffinityScorer,
) -> Result<Matrix, AffinityError> {
    if e_t.dim() != e_prev.dim() || e_t.capacity() != e_prev.capacity() {
        return Err(AffinityError::DimensionMismatch(
            e_prev.dim(),
            e_prev.capacity(),
            e_t.dim(),
            e_t.capacity(),
        ));
    }
    let n = e_t.capacity();
    let mut t = Matrix::zeros(n, n);
    for i in 0..e_prev.count() {
        for j in 0..e_t.count() {
            t[(i, j)] = scorer.score(e_prev.column(i), e_t.column(j));
        }
    }
    Ok(t)
}

/// Appends the entry row to a copy for `m_fw` and the exit column for `m_rv`.
pub fn pad_dynamic(t_prime: &Matrix, gamma: f64) -> (Matrix, Matrix) {
    let (r, c) = t_prime.shape();
    let mut m_fw = Matrix::filled(r + 1, c, gamma);
    let mut m_rv = Matrix::filled(r, c + 1, gamma);
    for i in 0..r {
        m_fw.row_mut(i).copy_from_slice(t_prime.row(i));
        m_rv.row_mut(i)[..c].copy_from_slice(t_prime.row(i));
    }
    (m_fw, m_rv)
}

fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in values.iter_mut() {
        *v = libm::exp(*v - max);
        total += *v;
    }
    for v in values.iter_mut() {
        *v /= total;
    }
}

/// Column softmax of `m_fw` and row softmax of `m_rv`, max-stabilized.
pub fn normalize(m_fw: &Matrix, m_rv: &Matrix) -> (Matrix, Matrix) {
    let mut p_fw = m_fw.transpose();
    for r in 0..p_fw.rows() {
        softmax_in_place(p_fw.row_mut(r));
    }
    let mut p_rv = m_rv.clone();
    for r in 0..p_rv.rows() {
        softmax_in_place(p_rv.row_mut(r));
    }
    (p_fw.transpose(), p_rv)
}

/// Scores, pads and normalizes in one go.
pub fn associate(
    e_prev: &EmbeddingMatrix,
    e_t: &EmbeddingMatrix,
    scorer: &impl AffinityScorer,
    gamma: f64,
) -> Result<AffinityResult, AffinityError> {
    let t_prime = affinity_scores(e_t, e_prev, scorer)?;
    let (m_fw, m_rv) = pad_dynamic(&t_prime, gamma);
    let (p_fw, p_rv) = normalize(&m_fw, &m_rv);
    Ok(AffinityResult { t_prime, m_fw, m_rv, p_fw, p_rv })
}

/// Ground-truth association between two frames, plain and padded.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthAssociation {
    pub g: Matrix,
    pub g_fw: Matrix,
    pub g_rv: Matrix,
}

impl GroundTruthAssociation {
    /// `pairs` lists `(prev_index, cur_index)` of the same instance. Real
    /// instances without a partner get a 1 in the entry row (`g_fw`) or the
    /// exit column (`g_rv`).
    pub fn from_pairs(
        capacity: usize,
        n_prev: usize,
        n_cur: usize,
        pairs: &[(usize, usize)],
    ) -> Result<Self, AffinityError> {
        if n_prev > capacity || n_cur > capacity {
            return Err(AffinityError::InvalidAssociation("instance count exceeds capacity"));
        }
        let mut g = Matrix::zeros(capacity, capacity);
        let mut row_used = alloc::vec![false; capacity];
        let mut col_used = alloc::vec![false; capacity];
        for &(i, j) in pairs {
            if i >= n_prev || j >= n_cur {
                return Err(AffinityError::InvalidAssociation("pair index out of range"));
            }
            if row_used[i] || col_used[j] {
                return Err(AffinityError::InvalidAssociation("instance paired twice"));
            }
            row_used[i] = true;
            col_used[j] = true;
            g[(i, j)] = 1.0;
        }
        let (mut g_fw, mut g_rv) = pad_dynamic(&g, 0.0);
        for j in (0..n_cur).filter(|&j| !col_used[j]) {
            g_fw[(capacity, j)] = 1.0;
        }
        for i in (0..n_prev).filter(|&i| !row_used[i]) {
            g_rv[(i, capacity)] = 1.0;
        }
        Ok(Self { g, g_fw, g_rv })
    }
}

fn check_shape(p: &Matrix, g: &Matrix) -> Result<(), AffinityError> {
    if p.shape() != g.shape() {
        return Err(AffinityError::ShapeMismatch { expected: g.shape(), actual: p.shape() });
    }
    Ok(())
}

fn neg_log(p: f64) -> f64 {
    -libm::log(p.max(PROBABILITY_FLOOR))
}

fn weighted_neg_log(g: &Matrix, prob: impl Fn(usize, usize) -> f64) -> Result<f64, AffinityError> {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let w = g[(i, j)];
            if w != 0.0 {
                num += w * neg_log(prob(i, j));
                den += w;
            }
        }
    }
    if den == 0.0 {
        return Err(AffinityError::NoGroundTruth);
    }
    Ok(num / den)
}

/// GT-weighted mean negative log probability over the padded matrices.
pub fn forward_loss(p_fw: &Matrix, g_fw: &Matrix) -> Result<f64, AffinityError> {
    check_shape(p_fw, g_fw)?;
    weighted_neg_log(g_fw, |i, j| p_fw[(i, j)])
}

pub fn reverse_loss(p_rv: &Matrix, g_rv: &Matrix) -> Result<f64, AffinityError> {
    check_shape(p_rv, g_rv)?;
    weighted_neg_log(g_rv, |i, j| p_rv[(i, j)])
}

/// Non-maximum loss: the padding row/column is dropped and each GT pair is
/// charged `-log max(p_fw, p_rv)`.
pub fn nonmax_loss(p_fw: &Matrix, p_rv: &Matrix, g: &Matrix) -> Result<f64, AffinityError> {
    let (n, m) = g.shape();
    check_shape(p_fw, &Matrix::zeros(n + 1, m))?;
    check_shape(p_rv, &Matrix::zeros(n, m + 1))?;
    weighted_neg_log(g, |i, j| p_fw[(i, j)].max(p_rv[(i, j)]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_fw: f64,
    pub l_rv: f64,
    pub l_nm: f64,
    pub l_match: f64,
}

pub fn match_loss(l_fw: f64, l_rv: f64, l_nm: f64) -> LossReport {
    LossReport { l_fw, l_rv, l_nm, l_match: (l_fw + l_rv + l_nm) / 3.0 }
}

/// All three association losses for one frame pair.
pub fn association_losses(
    result: &AffinityResult,
    gt: &GroundTruthAssociation,
) -> Result<LossReport, AffinityError> {
    let l_fw = forward_loss(&result.p_fw, &gt.g_fw)?;
    let l_rv = reverse_loss(&result.p_rv, &gt.g_rv)?;
    let l_nm = nonmax_loss(&result.p_fw, &result.p_rv, &gt.g)?;
    Ok(match_loss(l_fw, l_rv, l_nm))
}

/// Inputs of the uncertainty-weighted two-task loss. `s_i` and `s_j` are
/// fixed log-variance weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedLossInput {
    pub l_detseg_prev: f64,
    pub l_detseg_cur: f64,
    pub l_match: f64,
    pub s_i: f64,
    pub s_j: f64,
}

/// `((l_prev + l_cur) / e^s_i + s_i + l_match / e^s_j + s_j) / 2`
pub fn combined_loss(input: &CombinedLossInput) -> f64 {
    let det = (input.l_detseg_prev + input.l_detseg_cur) / libm::exp(input.s_i);
    let assoc = input.l_match / libm::exp(input.s_j);
    0.5 * (det + input.s_i + assoc + input.s_j)
}

/// Column sums of a matrix; handy for checking stochasticity.
pub fn column_sums(m: &Matrix) -> Vec<f64> {
    (0..m.cols()).map(|c| m.column(c).sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::build_embedding_matrix;
    use std::vec;

    const LN3: f64 = 1.0986122886681098;

    #[test]
    fn cosine_cases() {
        let s = CosineScorer::default();
        assert_eq!(s.score(&[0.6, 0.8], &[0.6, 0.8]), 1.0);
        assert_eq!(s.score(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(s.score(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert_eq!(NegSqEuclideanScorer::default().score(&[1.0, 2.0], &[0.0, 0.0]), -5.0);
    }

    #[test]
    fn padded_columns_score_zero() {
        let prev = build_embedding_matrix(&[vec![1.0, 0.0]], 2, 3).unwrap();
        let cur = build_embedding_matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]], 2, 3).unwrap();
        let t = affinity_scores(&cur, &prev, &CosineScorer::default()).unwrap();
        assert_eq!(t.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(t.row(1), &[0.0, 0.0, 0.0]);
        assert_eq!(t.row(2), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn score_dimension_mismatch() {
        let a = EmbeddingMatrix::zeros(2, 3);
        let b = EmbeddingMatrix::zeros(3, 3);
        assert!(affinity_scores(&a, &b, &CosineScorer::default()).is_err());
    }

    #[test]
    fn padding_shapes() {
        let t = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let (fw, rv) = pad_dynamic(&t, 0.3);
        assert_eq!(fw.shape(), (3, 2));
        assert_eq!(fw.row(2), &[0.3, 0.3]);
        assert_eq!(rv.shape(), (2, 3));
        assert_eq!(rv.column(2).collect::<std::vec::Vec<_>>(), vec![0.3, 0.3]);
        let (fw0, rv0) = pad_dynamic(&t, 0.0);
        assert_eq!(fw0.row(2), &[0.0, 0.0]);
        assert_eq!(rv0[(1, 2)], 0.0);
        assert_eq!(fw.row(0), t.row(0));
        assert_eq!(&rv.row(1)[..2], t.row(1));
    }

    #[test]
    fn softmax_cases() {
        let m_fw = Matrix::from_rows(&[vec![0.0, libm::log(2.0)], vec![0.0, 0.0], vec![0.0, 0.0]]);
        let m_rv = m_fw.transpose();
        let (p_fw, p_rv) = normalize(&m_fw, &m_rv);
        for i in 0..3 {
            assert!((p_fw[(i, 0)] - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((p_fw[(0, 1)] - 0.5).abs() < 1e-15);
        assert!((p_fw[(1, 1)] - 0.25).abs() < 1e-15);
        assert!((p_rv[(1, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn softmax_survives_huge_values() {
        let m_fw = Matrix::from_rows(&[vec![1e300, -1e300], vec![0.0, 0.0]]);
        let m_rv = Matrix::from_rows(&[vec![1e300, -1e300, 0.0]]);
        let (p_fw, p_rv) = normalize(&m_fw, &m_rv);
        assert_eq!(p_fw[(0, 0)], 1.0);
        assert_eq!(p_fw[(1, 1)], 1.0);
        assert_eq!(p_rv.row(0), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn gt_padding() {
        let gt = GroundTruthAssociation::from_pairs(3, 2, 2, &[(0, 1)]).unwrap();
        // cur 0 is new, prev 1 left
        assert_eq!(gt.g_fw[(3, 0)], 1.0);
        assert_eq!(gt.g_fw[(3, 1)], 0.0);
        assert_eq!(gt.g_fw[(3, 2)], 0.0);
        assert_eq!(gt.g_rv[(1, 3)], 1.0);
        assert_eq!(gt.g_rv[(0, 3)], 0.0);
        assert!(GroundTruthAssociation::from_pairs(3, 2, 2, &[(0, 1), (1, 1)]).is_err());
        assert!(GroundTruthAssociation::from_pairs(3, 2, 2, &[(2, 0)]).is_err());
    }

    #[test]
    fn perfect_losses_are_zero() {
        let gt = GroundTruthAssociation::from_pairs(2, 2, 2, &[(0, 1), (1, 0)]).unwrap();
        let report = LossReport {
            l_fw: forward_loss(&gt.g_fw, &gt.g_fw).unwrap(),
            l_rv: reverse_loss(&gt.g_rv, &gt.g_rv).unwrap(),
            l_nm: nonmax_loss(&gt.g_fw, &gt.g_rv, &gt.g).unwrap(),
            l_match: 0.0,
        };
        assert_eq!(report, LossReport { l_fw: 0.0, l_rv: 0.0, l_nm: 0.0, l_match: 0.0 });
    }

    #[test]
    fn uniform_losses_are_ln3() {
        let gt = GroundTruthAssociation::from_pairs(2, 2, 2, &[(0, 0), (1, 1)]).unwrap();
        let p_fw = Matrix::filled(3, 2, 1.0 / 3.0);
        let p_rv = Matrix::filled(2, 3, 1.0 / 3.0);
        assert!((forward_loss(&p_fw, &gt.g_fw).unwrap() - LN3).abs() < 1e-15);
        assert!((reverse_loss(&p_rv, &gt.g_rv).unwrap() - LN3).abs() < 1e-15);
        assert!((nonmax_loss(&p_fw, &p_rv, &gt.g).unwrap() - LN3).abs() < 1e-15);
    }

    #[test]
    fn empty_gt_errors() {
        let g = Matrix::zeros(3, 2);
        assert_eq!(forward_loss(&Matrix::zeros(3, 2), &g), Err(AffinityError::NoGroundTruth));
        assert!(matches!(
            forward_loss(&Matrix::zeros(2, 2), &g),
            Err(AffinityError::ShapeMismatch { .. })
        ));
        let g2 = Matrix::zeros(2, 2);
        assert_eq!(
            nonmax_loss(&Matrix::zeros(3, 2), &Matrix::zeros(2, 3), &g2),
            Err(AffinityError::NoGroundTruth)
        );
    }

    #[test]
    fn zero_probability_is_clamped() {
        let g = Matrix::from_rows(&[vec![1.0]]);
        let p = Matrix::from_rows(&[vec![0.0]]);
        let l = forward_loss(&p, &g).unwrap();
        assert!((l - 27.631021115928547).abs() < 1e-12);
    }

    #[test]
    fn match_loss_average() {
        assert_eq!(match_loss(0.0, 0.0, 0.0).l_match, 0.0);
        assert_eq!(match_loss(3.0, 3.0, 3.0).l_match, 3.0);
        assert_eq!(match_loss(1.0, 2.0, 6.0).l_match, 3.0);
    }

    #[test]
    fn combined_cases() {
        let zero = CombinedLossInput { l_detseg_prev: 0.0, l_detseg_cur: 0.0, l_match: 0.0, s_i: 0.0, s_j: 0.0 };
        assert_eq!(combined_loss(&zero), 0.0);
        let ones = CombinedLossInput { l_detseg_prev: 1.0, l_detseg_cur: 1.0, l_match: 2.0, ..zero };
        assert_eq!(combined_loss(&ones), 2.0);
    }

    #[test]
    fn associate_end_to_end_perfect() {
        let prev = build_embedding_matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]], 2, 2).unwrap();
        let cur = build_embedding_matrix(&[vec![0.0, 1.0], vec![1.0, 0.0]], 2, 2).unwrap();
        let res = associate(&prev, &cur, &CosineScorer { scale: 1000.0 }, 0.2).unwrap();
        let gt = GroundTruthAssociation::from_pairs(2, 2, 2, &[(0, 1), (1, 0)]).unwrap();
        let r = association_losses(&res, &gt).unwrap();
        assert_eq!(r.l_match, 0.0);
    }
}
