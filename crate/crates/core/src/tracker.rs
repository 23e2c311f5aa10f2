//! Online trajectory generation.
//!
//! Every frame's embeddings are stored as a node together with the track ids
//! they were assigned. A new frame is scored against the most recent nodes;
//! each node yields a track-by-detection similarity (the larger of the forward
//! and reverse probabilities, plus an exit column), and the per-node matrices
//! are fused by an entrywise median. Detections are then matched in a cascade:
//!
//! 1. motion gating against each track's Kalman prediction,
//! 2. appearance matching on the fused similarity,
//! 3. IOU matching of the leftovers against each track's last mask.
//!
//! Whatever stays unmatched starts a new track; tracks unmatched for longer
//! than `max_age` frames are dropped and their ids retired.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affinity::{associate, AffinityError, ScorerKind};
use crate::assignment::{solve_assignment, AssignmentError};
use crate::embedding::{build_embedding_matrix, select_most_confident, EmbeddingError, EmbeddingMatrix, SamplingStrategy};
use crate::mask::{bbox_iou, bbox_of, mask_iou, BinaryMask, BoundingBox, MaskError};
use crate::matrix::Matrix;
use crate::metrics::LabeledSequence;
use crate::motion::{gate, KalmanState, MotionConfig, MotionError, CHI2_95_4DOF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrackId(pub u64);

/// Overlap measure of the IOU stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IouMode {
    #[default]
    Mask,
    Bbox,
    /// Skip the IOU stage.
    Off,
}

/// What to do with more detections than `max_instances`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverflowPolicy {
    #[default]
    Strict,
    /// Keep the most confident `max_instances` detections.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("config key `{key}` {reason}")]
pub struct ConfigError {
    pub key: &'static str,
    pub reason: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Maximum instances per frame (`N_m`); embedding matrices are padded to it.
    pub max_instances: usize,
    /// Largest frame gap of a frame pair fed to the association losses (`T_m`).
    pub max_frame_gap: usize,
    /// Frames a track may stay unmatched before removal (`tau`).
    pub max_age: u32,
    /// Embedding length (`e`).
    pub embedding_len: usize,
    /// Entry/exit score appended to the raw affinities.
    pub gamma: f64,
    /// Minimum fused similarity for an appearance match.
    pub emb_threshold: f64,
    /// Minimum overlap for an IOU match.
    pub iou_threshold: f64,
    /// Squared Mahalanobis gate on the Kalman innovation.
    pub gate_threshold: f64,
    /// Number of stored nodes fused by median.
    pub fusion_depth: usize,
    pub sampling_strategy: SamplingStrategy,
    pub iou_mode: IouMode,
    /// Motion gating on or off.
    pub use_kalman: bool,
    pub overflow: OverflowPolicy,
    pub scorer: ScorerKind,
    /// Multiplier on raw scores before padding and softmax.
    pub score_scale: f64,
    /// Embeddings kept per track.
    pub history_cap: usize,
    pub motion: MotionConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            max_instances: 50,
            max_frame_gap: 10,
            max_age: 30,
            embedding_len: 352,
            gamma: 0.2,
            emb_threshold: 0.5,
            iou_threshold: 0.3,
            gate_threshold: CHI2_95_4DOF,
            fusion_depth: 4,
            sampling_strategy: SamplingStrategy::CentroidMaxContour,
            iou_mode: IouMode::Mask,
            use_kalman: true,
            overflow: OverflowPolicy::Strict,
            scorer: ScorerKind::Cosine,
            score_scale: 10.0,
            history_cap: 32,
            motion: MotionConfig::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check(ok: bool, key: &'static str, reason: &'static str) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError { key, reason })
            }
        }
        check(self.max_instances >= 1, "max_instances", "must be at least 1")?;
        check(self.max_frame_gap >= 1, "max_frame_gap", "must be at least 1")?;
        check(self.embedding_len >= 1, "embedding_len", "must be at least 1")?;
        check(self.gamma.is_finite(), "gamma", "must be finite")?;
        check((0.0..=1.0).contains(&self.emb_threshold), "emb_threshold", "must lie in [0, 1]")?;
        check((0.0..=1.0).contains(&self.iou_threshold), "iou_threshold", "must lie in [0, 1]")?;
        check(self.gate_threshold > 0.0, "gate_threshold", "must be positive")?;
        check(self.fusion_depth >= 1, "fusion_depth", "must be at least 1")?;
        check(self.score_scale.is_finite() && self.score_scale > 0.0, "score_scale", "must be positive")?;
        check(self.history_cap >= 1, "history_cap", "must be at least 1")?;
        check(self.motion.std_weight_position > 0.0, "motion.std_weight_position", "must be positive")?;
        check(self.motion.std_weight_velocity > 0.0, "motion.std_weight_velocity", "must be positive")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackerError {
    #[error("frame index {got} does not follow {previous}")]
    NonMonotoneFrame { previous: u64, got: u64 },
    #[error("detection {index} belongs to frame {got}, expected {expected}")]
    FrameMismatch { index: usize, expected: u64, got: u64 },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Affinity(#[from] AffinityError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame_index: u64,
    pub mask: BinaryMask,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub embedding: Vec<f64>,
}

impl Detection {
    /// Derives the box from the mask; empty masks are rejected.
    pub fn new(frame_index: u64, mask: BinaryMask, confidence: f64, embedding: Vec<f64>) -> Result<Self, MaskError> {
        let bbox = bbox_of(&mask)?;
        Ok(Self { frame_index, mask, bbox, confidence, embedding })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Active,
    Removed,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: TrackId,
    pub kstate: KalmanState,
    pub last_mask: BinaryMask,
    pub embedding_history: VecDeque<Vec<f64>>,
    /// Frames since creation.
    pub age: u32,
    pub time_since_update: u32,
    pub status: TrackStatus,
}

/// Embeddings of one past frame and the track ids they were assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub timestamp: u64,
    pub embeddings: EmbeddingMatrix,
    pub track_ids: Vec<TrackId>,
}

/// How a detection got its id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Association {
    Feature,
    Iou,
    New,
    /// Discarded by the lenient overflow policy.
    Dropped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    pub frame: u64,
    /// Track id per input detection, `None` for dropped ones.
    pub assignments: Vec<Option<TrackId>>,
    pub associations: Vec<Association>,
    pub new_tracks: Vec<TrackId>,
    pub removed_tracks: Vec<TrackId>,
}

/// Forward/reverse probabilities of one node against the current frame,
/// cut down to the real instances: `n_node x (n_cur + 1)`.
pub fn similarity_from_probabilities(p_fw: &Matrix, p_rv: &Matrix, n_node: usize, n_cur: usize) -> Matrix {
    let exit = p_rv.cols() - 1;
    let mut s = Matrix::zeros(n_node, n_cur + 1);
    for x in 0..n_node {
        for y in 0..n_cur {
            s[(x, y)] = p_fw[(x, y)].max(p_rv[(x, y)]);
        }
        s[(x, n_cur)] = p_rv[(x, exit)];
    }
    s
}

pub fn pair_similarity(
    node: &NodeRecord,
    current: &EmbeddingMatrix,
    cfg: &TrackerConfig,
) -> Result<Matrix, TrackerError> {
    let scorer = cfg.scorer.with_scale(cfg.score_scale);
    let res = associate(&node.embeddings, current, &scorer, cfg.gamma)?;
    Ok(similarity_from_probabilities(
        &res.p_fw,
        &res.p_rv,
        node.embeddings.count(),
        current.count(),
    ))
}

/// Median of a non-empty slice; even lengths average the middle pair.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Median-fuses per-node similarities into `tracks.len() x (n_cur + 1)`.
///
/// A track contributes to the median only through nodes that contain it;
/// tracks found in no node get an all-zero row.
pub fn fuse_similarity<'a>(
    nodes: impl IntoIterator<Item = &'a NodeRecord>,
    current: &EmbeddingMatrix,
    tracks: &[TrackId],
    cfg: &TrackerConfig,
) -> Result<Matrix, TrackerError> {
    let cols = current.count() + 1;
    let mut samples: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); cols]; tracks.len()];
    for node in nodes {
        let s = pair_similarity(node, current, cfg)?;
        for (x, id) in node.track_ids.iter().enumerate() {
            // tracks are kept sorted by id
            if let Ok(row) = tracks.binary_search(id) {
                for (c, bucket) in samples[row].iter_mut().enumerate() {
                    bucket.push(s[(x, c)]);
                }
            }
        }
    }
    let mut fused = Matrix::zeros(tracks.len(), cols);
    for (row, buckets) in samples.iter_mut().enumerate() {
        for (c, bucket) in buckets.iter_mut().enumerate() {
            if !bucket.is_empty() {
                fused[(row, c)] = median(bucket);
            }
        }
    }
    Ok(fused)
}

/// Single-sequence tracker state. One `step` per frame, in frame order.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    tracks: Vec<Track>,
    nodes: VecDeque<NodeRecord>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self { cfg, tracks: Vec::new(), nodes: VecDeque::new(), next_id: 1, last_frame: None })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeRecord> {
        self.nodes.iter()
    }

    pub fn step(&mut self, frame: u64, detections: &[Detection]) -> Result<FrameReport, TrackerError> {
        if let Some(previous) = self.last_frame {
            if frame <= previous {
                return Err(TrackerError::NonMonotoneFrame { previous, got: frame });
            }
        }
        for (index, d) in detections.iter().enumerate() {
            if d.frame_index != frame {
                return Err(TrackerError::FrameMismatch { index, expected: frame, got: d.frame_index });
            }
            if d.embedding.len() != self.cfg.embedding_len {
                return Err(EmbeddingError::LengthMismatch {
                    expected: self.cfg.embedding_len,
                    actual: d.embedding.len(),
                }
                .into());
            }
        }
        let kept: Vec<usize> = if detections.len() > self.cfg.max_instances {
            match self.cfg.overflow {
                OverflowPolicy::Strict => {
                    return Err(EmbeddingError::Overflow {
                        count: detections.len(),
                        capacity: self.cfg.max_instances,
                    }
                    .into())
                }
                OverflowPolicy::Lenient => {
                    let conf: Vec<f64> = detections.iter().map(|d| d.confidence).collect();
                    select_most_confident(&conf, self.cfg.max_instances)
                }
            }
        } else {
            (0..detections.len()).collect()
        };
        let dets: Vec<&Detection> = kept.iter().map(|&i| &detections[i]).collect();

        for t in &mut self.tracks {
            t.kstate = t.kstate.predict(&self.cfg.motion)?;
        }

        let current = build_embedding_matrix(
            &dets.iter().map(|d| d.embedding.as_slice()).collect::<Vec<_>>(),
            self.cfg.embedding_len,
            self.cfg.max_instances,
        )?;
        let track_ids: Vec<TrackId> = self.tracks.iter().map(|t| t.id).collect();
        let n_tr = self.tracks.len();
        let n_dt = dets.len();
        let exit_col = n_dt;
        let similarity = if n_tr > 0 && !self.nodes.is_empty() {
            let gap = self.cfg.max_frame_gap as u64;
            let recent = self.nodes.iter().rev().take(self.cfg.fusion_depth).filter(|n| frame - n.timestamp <= gap);
            fuse_similarity(recent, &current, &track_ids, &self.cfg)?
        } else {
            Matrix::zeros(n_tr, n_dt + 1)
        };

        let mut allowed = vec![true; n_tr * n_dt];
        if self.cfg.use_kalman {
            for (i, t) in self.tracks.iter().enumerate() {
                for (j, d) in dets.iter().enumerate() {
                    allowed[i * n_dt + j] =
                        gate(&t.kstate, &d.bbox.cell_extent(), self.cfg.gate_threshold, &self.cfg.motion);
                }
            }
        }

        let mut track_match: Vec<Option<usize>> = vec![None; n_tr];
        let mut det_match: Vec<Option<(usize, Association)>> = vec![None; n_dt];

        // appearance
        if n_tr > 0 && n_dt > 0 {
            let mut cost = Matrix::filled(n_tr, n_dt, f64::INFINITY);
            for i in 0..n_tr {
                let exit = similarity[(i, exit_col)];
                for j in 0..n_dt {
                    let s = similarity[(i, j)];
                    if allowed[i * n_dt + j] && s >= self.cfg.emb_threshold && s >= exit {
                        cost[(i, j)] = -s;
                    }
                }
            }
            for (i, j) in solve_assignment(&cost)?.pairs {
                track_match[i] = Some(j);
                det_match[j] = Some((i, Association::Feature));
            }
        }

        // overlap on the leftovers
        if self.cfg.iou_mode != IouMode::Off {
            let rows: Vec<usize> = (0..n_tr).filter(|&i| track_match[i].is_none()).collect();
            let cols: Vec<usize> = (0..n_dt).filter(|&j| det_match[j].is_none()).collect();
            if !rows.is_empty() && !cols.is_empty() {
                let mut cost = Matrix::filled(rows.len(), cols.len(), f64::INFINITY);
                for (r, &i) in rows.iter().enumerate() {
                    let t = &self.tracks[i];
                    for (c, &j) in cols.iter().enumerate() {
                        if !allowed[i * n_dt + j] {
                            continue;
                        }
                        let iou = match self.cfg.iou_mode {
                            IouMode::Mask => mask_iou(&t.last_mask, &dets[j].mask)?,
                            IouMode::Bbox => bbox_iou(&bbox_of(&t.last_mask)?, &dets[j].bbox),
                            IouMode::Off => unreachable!(),
                        };
                        if iou >= self.cfg.iou_threshold {
                            cost[(r, c)] = 1.0 - iou;
                        }
                    }
                }
                for (r, c) in solve_assignment(&cost)?.pairs {
                    track_match[rows[r]] = Some(cols[c]);
                    det_match[cols[c]] = Some((rows[r], Association::Iou));
                }
            }
        }

        let mut assigned: Vec<TrackId> = Vec::with_capacity(n_dt);
        let mut associations: Vec<Association> = Vec::with_capacity(n_dt);
        for (j, d) in dets.iter().enumerate() {
            match det_match[j] {
                Some((i, how)) => {
                    let t = &mut self.tracks[i];
                    let measured = d.bbox.cell_extent();
                    t.kstate = match t.kstate.update(&measured, &self.cfg.motion) {
                        Ok(s) => s,
                        Err(_) => KalmanState::new(&measured, &self.cfg.motion)?,
                    };
                    t.last_mask = d.mask.clone();
                    t.embedding_history.push_back(d.embedding.clone());
                    while t.embedding_history.len() > self.cfg.history_cap {
                        t.embedding_history.pop_front();
                    }
                    t.time_since_update = 0;
                    assigned.push(t.id);
                    associations.push(how);
                }
                None => {
                    // placeholder, filled once survivors are settled
                    assigned.push(TrackId(0));
                    associations.push(Association::New);
                }
            }
        }

        let mut removed_tracks = Vec::new();
        let mut survivors = Vec::with_capacity(n_tr);
        for (i, mut t) in core::mem::take(&mut self.tracks).into_iter().enumerate() {
            t.age += 1;
            if track_match[i].is_none() {
                t.time_since_update += 1;
                if t.time_since_update > self.cfg.max_age {
                    t.status = TrackStatus::Removed;
                    removed_tracks.push(t.id);
                    continue;
                }
            }
            survivors.push(t);
        }
        self.tracks = survivors;

        let mut new_tracks = Vec::new();
        for (j, d) in dets.iter().enumerate() {
            if det_match[j].is_some() {
                continue;
            }
            let id = TrackId(self.next_id);
            self.next_id += 1;
            let mut history = VecDeque::new();
            history.push_back(d.embedding.clone());
            self.tracks.push(Track {
                id,
                kstate: KalmanState::new(&d.bbox.cell_extent(), &self.cfg.motion)?,
                last_mask: d.mask.clone(),
                embedding_history: history,
                age: 0,
                time_since_update: 0,
                status: TrackStatus::Active,
            });
            assigned[j] = id;
            new_tracks.push(id);
        }

        self.nodes.push_back(NodeRecord { timestamp: frame, embeddings: current, track_ids: assigned.clone() });
        while self.nodes.len() > self.cfg.fusion_depth {
            self.nodes.pop_front();
        }
        self.last_frame = Some(frame);

        let mut assignments = vec![None; detections.len()];
        let mut all_associations = vec![Association::Dropped; detections.len()];
        for (k, &orig) in kept.iter().enumerate() {
            assignments[orig] = Some(assigned[k]);
            all_associations[orig] = associations[k];
        }
        Ok(FrameReport { frame, assignments, associations: all_associations, new_tracks, removed_tracks })
    }
}

/// Runs a fresh tracker over `frames` (frame index = position) and returns
/// the predicted masks per frame, sorted by track id, with the frame reports.
pub fn track_sequence(
    cfg: TrackerConfig,
    width: u32,
    height: u32,
    frames: &[Vec<Detection>],
) -> Result<(LabeledSequence, Vec<FrameReport>), TrackerError> {
    let mut tracker = Tracker::new(cfg)?;
    let mut out = Vec::with_capacity(frames.len());
    let mut reports = Vec::with_capacity(frames.len());
    for (f, dets) in frames.iter().enumerate() {
        let report = tracker.step(f as u64, dets)?;
        let mut labeled: Vec<(u64, BinaryMask)> = report
            .assignments
            .iter()
            .zip(dets)
            .filter_map(|(id, d)| id.map(|id| (id.0, d.mask.clone())))
            .collect();
        labeled.sort_by_key(|p| p.0);
        out.push(labeled);
        reports.push(report);
    }
    Ok((LabeledSequence { width, height, frames: out }, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::vec;

    fn small_cfg() -> TrackerConfig {
        TrackerConfig { max_instances: 4, embedding_len: 3, ..TrackerConfig::default() }
    }

    fn rect(x0: i64, y0: i64, w: i64, h: i64) -> BinaryMask {
        BinaryMask::from_row_spans(100, 100, (y0..y0 + h).map(|y| (y, x0, x0 + w))).unwrap()
    }

    fn det(frame: u64, mask: BinaryMask, emb: [f64; 3]) -> Detection {
        Detection::new(frame, mask, 0.9, emb.to_vec()).unwrap()
    }

    #[test]
    fn exit_column_and_max() {
        let p_fw = Matrix::from_rows(&[vec![0.7], vec![0.3]]);
        let p_rv = Matrix::from_rows(&[vec![0.6, 0.1]]);
        let s = similarity_from_probabilities(&p_fw, &p_rv, 1, 1);
        assert_eq!(s.row(0), &[0.7, 0.1]);
    }

    #[test]
    fn identical_embeddings_beat_exit() {
        let cfg = small_cfg();
        let e = build_embedding_matrix(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], 3, 4).unwrap();
        let node = NodeRecord { timestamp: 0, embeddings: e.clone(), track_ids: vec![TrackId(1), TrackId(2)] };
        let s = pair_similarity(&node, &e, &cfg).unwrap();
        assert_eq!(s.shape(), (2, 3));
        for i in 0..2 {
            assert!(s[(i, i)] > s[(i, 2)]);
        }
    }

    #[test]
    fn no_current_detections_gives_exit_only() {
        let cfg = small_cfg();
        let e = build_embedding_matrix(&[vec![1.0, 0.0, 0.0]], 3, 4).unwrap();
        let node = NodeRecord { timestamp: 0, embeddings: e, track_ids: vec![TrackId(1)] };
        let s = pair_similarity(&node, &EmbeddingMatrix::zeros(3, 4), &cfg).unwrap();
        assert_eq!(s.shape(), (1, 1));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [0.8, 0.2, 0.6, 0.4]), 0.5);
        assert_eq!(median(&mut [0.9, 0.2, 0.4]), 0.4);
        assert_eq!(median(&mut [0.3]), 0.3);
    }

    #[test]
    fn fuse_single_node_reindexes() {
        let cfg = small_cfg();
        let e = build_embedding_matrix(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], 3, 4).unwrap();
        let node = NodeRecord { timestamp: 0, embeddings: e.clone(), track_ids: vec![TrackId(7), TrackId(3)] };
        let direct = pair_similarity(&node, &e, &cfg).unwrap();
        let tracks = [TrackId(3), TrackId(5), TrackId(7)];
        let fused = fuse_similarity([&node], &e, &tracks, &cfg).unwrap();
        assert_eq!(fused.row(0), direct.row(1));
        assert_eq!(fused.row(1), &[0.0, 0.0, 0.0]);
        assert_eq!(fused.row(2), direct.row(0));
    }

    #[test]
    fn first_frame_creates_tracks() {
        let mut t = Tracker::new(small_cfg()).unwrap();
        let r = t
            .step(0, &[det(0, rect(0, 0, 10, 10), [1.0, 0.0, 0.0]), det(0, rect(50, 50, 10, 10), [0.0, 1.0, 0.0])])
            .unwrap();
        assert_eq!(r.assignments, vec![Some(TrackId(1)), Some(TrackId(2))]);
        assert_eq!(r.new_tracks, vec![TrackId(1), TrackId(2)]);
        assert_eq!(t.tracks().len(), 2);
    }

    #[test]
    fn identities_carry_over() {
        let mut t = Tracker::new(small_cfg()).unwrap();
        t.step(0, &[det(0, rect(0, 0, 10, 10), [1.0, 0.0, 0.0]), det(0, rect(50, 50, 10, 10), [0.0, 1.0, 0.0])])
            .unwrap();
        // swapped order, small motion
        let r = t
            .step(1, &[det(1, rect(51, 50, 10, 10), [0.0, 1.0, 0.0]), det(1, rect(1, 0, 10, 10), [1.0, 0.0, 0.0])])
            .unwrap();
        assert_eq!(r.assignments, vec![Some(TrackId(2)), Some(TrackId(1))]);
        assert_eq!(r.associations, vec![Association::Feature, Association::Feature]);
        assert!(r.new_tracks.is_empty());
    }

    #[test]
    fn stale_track_removed_and_id_retired() {
        let cfg = TrackerConfig { max_age: 2, ..small_cfg() };
        let mut t = Tracker::new(cfg).unwrap();
        t.step(0, &[det(0, rect(0, 0, 10, 10), [1.0, 0.0, 0.0])]).unwrap();
        let mut removed = vec![];
        for f in 1..=3 {
            removed.extend(t.step(f, &[]).unwrap().removed_tracks);
        }
        assert_eq!(removed, vec![TrackId(1)]);
        let r = t.step(4, &[det(4, rect(0, 0, 10, 10), [1.0, 0.0, 0.0])]).unwrap();
        assert_eq!(r.assignments, vec![Some(TrackId(2))]);
    }

    #[test]
    fn track_survives_within_max_age() {
        let cfg = TrackerConfig { max_age: 2, ..small_cfg() };
        let mut t = Tracker::new(cfg).unwrap();
        t.step(0, &[det(0, rect(0, 0, 10, 10), [1.0, 0.0, 0.0])]).unwrap();
        t.step(1, &[]).unwrap();
        t.step(2, &[]).unwrap();
        assert_eq!(t.tracks().len(), 1);
        assert_eq!(t.tracks()[0].time_since_update, 2);
    }

    #[test]
    fn non_monotone_frame_rejected() {
        let mut t = Tracker::new(small_cfg()).unwrap();
        t.step(3, &[]).unwrap();
        assert_eq!(t.step(3, &[]), Err(TrackerError::NonMonotoneFrame { previous: 3, got: 3 }));
    }

    #[test]
    fn overflow_policies() {
        let dets: Vec<Detection> = (0..5)
            .map(|i| {
                let mut d = det(0, rect(i * 15, 0, 10, 10), [1.0, 0.0, 0.0]);
                d.confidence = 0.1 * (i as f64 + 1.0);
                d
            })
            .collect();
        let mut strict = Tracker::new(small_cfg()).unwrap();
        assert!(matches!(strict.step(0, &dets), Err(TrackerError::Embedding(EmbeddingError::Overflow { .. }))));
        let mut lenient = Tracker::new(TrackerConfig { overflow: OverflowPolicy::Lenient, ..small_cfg() }).unwrap();
        let r = lenient.step(0, &dets).unwrap();
        assert_eq!(r.assignments[0], None);
        assert_eq!(r.associations[0], Association::Dropped);
        assert!(r.assignments[1..].iter().all(|a| a.is_some()));
    }

    #[test]
    fn wrong_embedding_length() {
        let mut t = Tracker::new(small_cfg()).unwrap();
        let d = Detection::new(0, rect(0, 0, 4, 4), 0.9, vec![1.0]).unwrap();
        assert!(matches!(t.step(0, &[d]), Err(TrackerError::Embedding(EmbeddingError::LengthMismatch { .. }))));
    }

    #[test]
    fn iou_rescues_appearance_change() {
        let mut t = Tracker::new(small_cfg()).unwrap();
        t.step(0, &[det(0, rect(10, 10, 20, 20), [1.0, 0.0, 0.0])]).unwrap();
        let r = t.step(1, &[det(1, rect(11, 10, 20, 20), [0.0, 0.0, 1.0])]).unwrap();
        assert_eq!(r.assignments, vec![Some(TrackId(1))]);
        assert_eq!(r.associations, vec![Association::Iou]);
    }

    #[test]
    fn gating_blocks_teleport() {
        let cfg = TrackerConfig { iou_mode: IouMode::Off, ..small_cfg() };
        let mut t = Tracker::new(cfg).unwrap();
        t.step(0, &[det(0, rect(0, 0, 10, 10), [1.0, 0.0, 0.0])]).unwrap();
        let r = t.step(1, &[det(1, rect(80, 80, 10, 10), [1.0, 0.0, 0.0])]).unwrap();
        assert_eq!(r.associations, vec![Association::New]);
        let cfg = TrackerConfig { iou_mode: IouMode::Off, use_kalman: false, ..small_cfg() };
        let mut t = Tracker::new(cfg).unwrap();
        t.step(0, &[det(0, rect(0, 0, 10, 10), [1.0, 0.0, 0.0])]).unwrap();
        let r = t.step(1, &[det(1, rect(80, 80, 10, 10), [1.0, 0.0, 0.0])]).unwrap();
        assert_eq!(r.assignments, vec![Some(TrackId(1))]);
    }

    #[test]
    fn config_validation_names_key() {
        let cfg = TrackerConfig { iou_threshold: 1.5, ..TrackerConfig::default() };
        assert_eq!(cfg.validate().unwrap_err().key, "iou_threshold");
        let cfg = TrackerConfig { fusion_depth: 0, ..TrackerConfig::default() };
        assert_eq!(Tracker::new(cfg).unwrap_err().key, "fusion_depth");
    }

    #[test]
    fn node_memory_is_bounded() {
        let mut t = Tracker::new(small_cfg()).unwrap();
        for f in 0..10 {
            t.step(f, &[det(f, rect(f as i64, 0, 10, 10), [1.0, 0.0, 0.0])]).unwrap();
            assert!(t.nodes().count() <= 4);
        }
        assert_eq!(t.tracks().len(), 1);
    }
}
