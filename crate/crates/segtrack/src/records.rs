//! Wire records of the JSON Lines streams and their conversion to core types.
//!
//! - Detections: `{"frame", "mask", "score", "embedding" | "feature_maps"}`;
//!   `feature_maps` is a path, relative to the detection file, of a JSON
//!   feature-map stack.
//! - Tracks and ground truth: `{"frame", "track_id", "mask", "score"}`.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use segtrack_core::embedding::{sample_embedding, sampling_point, FeatureMapStack, SamplingStrategy};
use segtrack_core::mask::BinaryMask;
use segtrack_core::metrics::LabeledSequence;
use segtrack_core::tracker::Detection;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::json::{read_json, read_jsonl};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub frame: u64,
    pub mask: BinaryMask,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_maps: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRecord {
    pub frame: u64,
    pub track_id: u64,
    pub mask: BinaryMask,
    pub score: f64,
}

/// Detection records grouped by frame, frames `0..=max` present.
pub fn group_detections(records: Vec<(usize, DetectionRecord)>) -> Vec<Vec<(usize, DetectionRecord)>> {
    let n = records.iter().map(|(_, r)| r.frame + 1).max().unwrap_or(0) as usize;
    let mut frames = vec![Vec::new(); n];
    for (line, r) in records {
        frames[r.frame as usize].push((line, r));
    }
    frames
}

/// Reads a detection file and resolves every record to an embedding,
/// sampling referenced feature maps at the mask's sampling point.
pub fn load_detections(path: &Path, strategy: SamplingStrategy) -> Result<Vec<Vec<Detection>>, CliError> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut stacks: HashMap<PathBuf, FeatureMapStack> = HashMap::new();
    let mut out = Vec::new();
    for frame in group_detections(read_jsonl(path)?) {
        let mut dets = Vec::with_capacity(frame.len());
        for (line, r) in frame {
            let bad = |message: String| CliError::Record { path: path.to_path_buf(), line, message };
            let embedding = match (r.embedding, r.feature_maps) {
                (Some(e), None) => e,
                (None, Some(rel)) => {
                    let file = base.join(&rel);
                    if !stacks.contains_key(&file) {
                        let stack: FeatureMapStack = read_json(&file)?;
                        stacks.insert(file.clone(), stack);
                    }
                    let stack = &stacks[&file];
                    let point = sampling_point(&r.mask, strategy).map_err(|e| bad(e.to_string()))?;
                    sample_embedding(stack, point, stack.embedding_len()).map_err(|e| bad(e.to_string()))?
                }
                _ => return Err(bad("exactly one of `embedding` and `feature_maps` must be present".into())),
            };
            if !r.score.is_finite() {
                return Err(bad("score must be finite".into()));
            }
            dets.push(Detection::new(r.frame, r.mask, r.score, embedding).map_err(|e| bad(e.to_string()))?);
        }
        out.push(dets);
    }
    Ok(out)
}

/// Reads a track file into per-frame `(id, mask)` lists. `min_frames` pads
/// the sequence with empty trailing frames.
pub fn load_tracks(path: &Path, min_frames: usize) -> Result<LabeledSequence, CliError> {
    let records: Vec<(usize, TrackRecord)> = read_jsonl(path)?;
    tracks_to_sequence(path, records, min_frames)
}

pub fn tracks_to_sequence(
    path: &Path,
    records: Vec<(usize, TrackRecord)>,
    min_frames: usize,
) -> Result<LabeledSequence, CliError> {
    let n = records.iter().map(|(_, r)| r.frame as usize + 1).max().unwrap_or(0).max(min_frames);
    let (width, height) = records.first().map_or((1, 1), |(_, r)| (r.mask.width(), r.mask.height()));
    let mut seen: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    let mut frames: Vec<Vec<(u64, BinaryMask)>> = vec![Vec::new(); n];
    for (line, r) in records {
        let bad = |message: String| CliError::Record { path: path.to_path_buf(), line, message };
        if (r.mask.width(), r.mask.height()) != (width, height) {
            return Err(bad(format!("mask is {}x{}, expected {width}x{height}", r.mask.width(), r.mask.height())));
        }
        match seen.entry((r.frame, r.track_id)) {
            Entry::Occupied(first) => {
                return Err(bad(format!("track {} repeats in frame {} (first on line {})", r.track_id, r.frame, first.get())))
            }
            Entry::Vacant(v) => {
                v.insert(line);
            }
        }
        frames[r.frame as usize].push((r.track_id, r.mask));
    }
    for f in &mut frames {
        f.sort_by_key(|(id, _)| *id);
    }
    Ok(LabeledSequence::new(width, height, frames)?)
}

/// Track records of a labeled sequence, frame-major, ids ascending.
pub fn sequence_to_tracks(seq: &LabeledSequence, score: impl Fn(usize, u64) -> f64) -> Vec<TrackRecord> {
    let mut out = Vec::new();
    for (f, frame) in seq.frames.iter().enumerate() {
        let mut items: Vec<&(u64, BinaryMask)> = frame.iter().collect();
        items.sort_by_key(|(id, _)| *id);
        for (id, mask) in items {
            out.push(TrackRecord { frame: f as u64, track_id: *id, mask: mask.clone(), score: score(f, *id) });
        }
    }
    out
}
