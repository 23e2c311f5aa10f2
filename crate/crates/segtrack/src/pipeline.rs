//! The four commands as library functions over paths.

use std::fs;
use std::path::{Path, PathBuf};

use segtrack_core::affinity::{
    associate, combined_loss, forward_loss, match_loss, nonmax_loss, reverse_loss, CombinedLossInput,
    GroundTruthAssociation, LossReport,
};
use segtrack_core::embedding::build_embedding_matrix;
use segtrack_core::metrics::{evaluate, MetricsReport};
use segtrack_core::simulator::{center_coincidence_fixture, generate, FixtureConfig, ScenarioConfig};
use segtrack_core::tracker::{track_sequence, TrackerConfig};
use segtrack_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::config::to_toml;
use crate::error::CliError;
use crate::json::{read_jsonl, write_atomic, write_json, write_json_compact, write_jsonl};
use crate::records::{load_detections, load_tracks, sequence_to_tracks, DetectionRecord, TrackRecord};

pub const GT_FILE: &str = "gt.jsonl";
pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const SCENARIO_FILE: &str = "scenario.toml";
pub const FIXTURE_FILE: &str = "fixture.toml";
pub const TRACKER_FILE: &str = "tracker.toml";
pub const FEATURES_DIR: &str = "features";

/// Feature-map profile used by `simulate --fixture`; small enough to keep the
/// per-frame stack files compact.
pub const FIXTURE_PROFILE: [(usize, f64); 2] = [(4, 4.0), (4, 8.0)];

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Writes `gt.jsonl`, `detections.jsonl`, the scenario config and a matching
/// tracker config into `out`.
pub fn simulate(cfg: &ScenarioConfig, out: &Path) -> Result<(), CliError> {
    let scenario = generate(cfg)?;
    create_dir(out)?;
    write_jsonl(&out.join(GT_FILE), &sequence_to_tracks(&scenario.gt, |_, _| 1.0))?;
    let detections: Vec<DetectionRecord> = scenario
        .detections
        .iter()
        .flatten()
        .map(|d| DetectionRecord {
            frame: d.frame_index,
            mask: d.mask.clone(),
            score: d.confidence,
            embedding: Some(d.embedding.clone()),
            feature_maps: None,
        })
        .collect();
    write_jsonl(&out.join(DETECTIONS_FILE), &detections)?;
    write_atomic(&out.join(SCENARIO_FILE), to_toml(cfg)?.as_bytes())?;
    let tracker = TrackerConfig {
        embedding_len: cfg.embedding_len,
        max_instances: cfg.max_instances,
        ..TrackerConfig::default()
    };
    write_atomic(&out.join(TRACKER_FILE), to_toml(&tracker)?.as_bytes())
}

/// Writes the center-coincidence fixture: ground truth, detections that
/// reference one feature-map stack file per frame, and configs.
pub fn simulate_fixture(cfg: &FixtureConfig, out: &Path) -> Result<(), CliError> {
    let fx = center_coincidence_fixture(cfg)?;
    create_dir(&out.join(FEATURES_DIR))?;
    write_jsonl(&out.join(GT_FILE), &sequence_to_tracks(&fx.gt, |_, _| 1.0))?;
    let mut detections = Vec::new();
    for (f, order) in fx.orders.iter().enumerate() {
        let rel = format!("{FEATURES_DIR}/frame_{f:05}.json");
        write_json_compact(&out.join(&rel), &fx.feature_stack(f))?;
        for id in order {
            let mask = &fx.gt.frames[f].iter().find(|(i, _)| i == id).expect("fixture id").1;
            detections.push(DetectionRecord {
                frame: f as u64,
                mask: mask.clone(),
                score: 0.9,
                embedding: None,
                feature_maps: Some(rel.clone()),
            });
        }
    }
    write_jsonl(&out.join(DETECTIONS_FILE), &detections)?;
    write_atomic(&out.join(FIXTURE_FILE), to_toml(cfg)?.as_bytes())?;
    let tracker = TrackerConfig { embedding_len: fx.embedding_len(), ..TrackerConfig::default() };
    write_atomic(&out.join(TRACKER_FILE), to_toml(&tracker)?.as_bytes())
}

/// Tracks a detection file and writes one record per (frame, track).
pub fn track(detections: &Path, cfg: &TrackerConfig, out: &Path) -> Result<(), CliError> {
    let frames = load_detections(detections, cfg.sampling_strategy)?;
    let dims = frames.iter().flatten().next().map(|d| (d.mask.width(), d.mask.height()));
    let records: Vec<TrackRecord> = match dims {
        None => Vec::new(),
        Some((width, height)) => {
            let (pred, reports) = track_sequence(cfg.clone(), width, height, &frames)?;
            sequence_to_tracks(&pred, |f, id| {
                let slot = reports[f].assignments.iter().position(|a| a.is_some_and(|t| t.0 == id));
                slot.map_or(1.0, |j| frames[f][j].confidence)
            })
        }
    };
    write_jsonl(out, &records)
}

/// Evaluates a prediction file against ground truth. Sequences are padded
/// with empty frames to the longer of the two.
pub fn eval(gt: &Path, pred: &Path) -> Result<MetricsReport, CliError> {
    let gt_seq = load_tracks(gt, 0)?;
    let pred_seq = load_tracks(pred, gt_seq.frames.len())?;
    let gt_seq = load_tracks(gt, pred_seq.frames.len())?;
    Ok(evaluate(&gt_seq, &pred_seq)?)
}

/// One frame pair for `losses`: either embeddings of both frames (rows are
/// instances) or ready-made probability matrices. The det-seg losses and
/// log-variance weights of the combined loss default to 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FramePairRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prev: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cur: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_fw: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_rv: Option<Vec<Vec<f64>>>,
    pub l_detseg_prev: f64,
    pub l_detseg_cur: f64,
    pub s_i: f64,
    pub s_j: f64,
}

/// Ground-truth association of one frame pair: `(prev, cur)` index pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssociationRecord {
    pub n_prev: usize,
    pub n_cur: usize,
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairLoss {
    #[serde(flatten)]
    pub losses: LossReport,
    pub combined: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossesOutput {
    pub pairs: Vec<PairLoss>,
    pub mean: LossReport,
    pub mean_combined: f64,
}

fn rectangular(rows: &[Vec<f64>]) -> bool {
    rows.iter().all(|r| r.len() == rows[0].len())
}

/// Association losses of each frame pair against its ground truth. With
/// embeddings, `cfg` supplies capacity, scorer, scale and entry/exit score.
pub fn losses(pairs_path: &Path, gt_path: &Path, cfg: &TrackerConfig) -> Result<LossesOutput, CliError> {
    let pairs: Vec<(usize, FramePairRecord)> = read_jsonl(pairs_path)?;
    let gts: Vec<(usize, AssociationRecord)> = read_jsonl(gt_path)?;
    if pairs.len() != gts.len() {
        return Err(CliError::Usage(format!("{} frame pairs but {} associations", pairs.len(), gts.len())));
    }
    let mut out = Vec::with_capacity(pairs.len());
    for ((line, pair), (gt_line, gt)) in pairs.into_iter().zip(gts) {
        let bad = |message: String| CliError::Record { path: pairs_path.to_path_buf(), line, message };
        let (p_fw, p_rv, capacity) = match (&pair.prev, &pair.cur, &pair.p_fw, &pair.p_rv) {
            (Some(prev), Some(cur), None, None) => {
                if prev.len() != gt.n_prev || cur.len() != gt.n_cur {
                    return Err(bad(format!(
                        "{}x{} instances but association line {gt_line} says {}x{}",
                        prev.len(),
                        cur.len(),
                        gt.n_prev,
                        gt.n_cur
                    )));
                }
                let dim = prev.iter().chain(cur).next().map_or(1, Vec::len);
                let e_prev = build_embedding_matrix(prev, dim, cfg.max_instances)?;
                let e_cur = build_embedding_matrix(cur, dim, cfg.max_instances)?;
                let result = associate(&e_prev, &e_cur, &cfg.scorer.with_scale(cfg.score_scale), cfg.gamma)?;
                (result.p_fw, result.p_rv, cfg.max_instances)
            }
            (None, None, Some(fw), Some(rv)) => {
                let cap = fw.first().map_or(0, Vec::len);
                let shapes_ok = fw.len() == cap + 1
                    && rectangular(fw)
                    && rv.len() == cap
                    && rv.iter().all(|r| r.len() == cap + 1);
                if cap == 0 || !shapes_ok {
                    return Err(bad("p_fw must be (N+1)xN and p_rv Nx(N+1)".into()));
                }
                (Matrix::from_rows(fw), Matrix::from_rows(rv), cap)
            }
            _ => return Err(bad("give either `prev` and `cur` or `p_fw` and `p_rv`".into())),
        };
        let g = GroundTruthAssociation::from_pairs(capacity, gt.n_prev, gt.n_cur, &gt.pairs).map_err(|e| {
            CliError::Record { path: gt_path.to_path_buf(), line: gt_line, message: e.to_string() }
        })?;
        let report = match_loss(
            forward_loss(&p_fw, &g.g_fw)?,
            reverse_loss(&p_rv, &g.g_rv)?,
            nonmax_loss(&p_fw, &p_rv, &g.g)?,
        );
        let combined = combined_loss(&CombinedLossInput {
            l_detseg_prev: pair.l_detseg_prev,
            l_detseg_cur: pair.l_detseg_cur,
            l_match: report.l_match,
            s_i: pair.s_i,
            s_j: pair.s_j,
        });
        out.push(PairLoss { losses: report, combined });
    }
    let n = out.len().max(1) as f64;
    let mean = match_loss(
        out.iter().map(|p| p.losses.l_fw).sum::<f64>() / n,
        out.iter().map(|p| p.losses.l_rv).sum::<f64>() / n,
        out.iter().map(|p| p.losses.l_nm).sum::<f64>() / n,
    );
    let mean_combined = out.iter().map(|p| p.combined).sum::<f64>() / n;
    Ok(LossesOutput { pairs: out, mean, mean_combined })
}

/// Writes a JSON report to `out`, or to stdout when `out` is `None`.
pub fn emit_report<T: Serialize>(value: &T, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            print!("{}", crate::json::to_pretty(value)?);
            Ok(())
        }
    }
}
