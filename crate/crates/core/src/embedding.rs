//! Appearance embeddings: multi-scale feature sampling and the padded
//! per-frame embedding matrix.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{bbox_of, centroid, BinaryMask, Centroid, MaskError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbeddingError {
    #[error("embedding length {actual} does not match configured length {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("instance overflow: {count} instances exceed capacity {capacity}")]
    Overflow { count: usize, capacity: usize },
    #[error("feature map {index} is malformed: {reason}")]
    InvalidMap { index: usize, reason: &'static str },
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// `(channels, stride)` of the eleven backbone layers sampled by default,
/// 32 channels each for a 352-long embedding.
pub const DEFAULT_LAYER_PROFILE: [(usize, f64); 11] = [
    (32, 4.0),
    (32, 4.0),
    (32, 8.0),
    (32, 8.0),
    (32, 16.0),
    (32, 16.0),
    (32, 16.0),
    (32, 16.0),
    (32, 16.0),
    (32, 32.0),
    (32, 32.0),
];

/// Where an instance's embedding is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    /// Moment centroid of the largest connected component.
    #[default]
    CentroidMaxContour,
    /// Center of the mask's bounding box.
    BboxCenter,
}

pub fn sampling_point(mask: &BinaryMask, strategy: SamplingStrategy) -> Result<Centroid, MaskError> {
    match strategy {
        SamplingStrategy::CentroidMaxContour => centroid(mask),
        SamplingStrategy::BboxCenter => {
            let (x, y) = bbox_of(mask)?.center();
            Ok(Centroid { x, y })
        }
    }
}

/// One dense feature map, stored height x width x channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Input pixels per cell.
    pub stride: f64,
    pub data: Vec<f64>,
}

impl FeatureMap {
    /// Fills every cell with `f(cell_x, cell_y, out)`.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        stride: f64,
        mut f: impl FnMut(usize, usize, &mut [f64]),
    ) -> Self {
        let mut data = vec![0.0; channels * height * width];
        for y in 0..height {
            for x in 0..width {
                let at = (y * width + x) * channels;
                f(x, y, &mut data[at..at + channels]);
            }
        }
        Self { channels, height, width, stride, data }
    }

    /// Channel vector at a cell; coordinates are clamped to the map.
    pub fn cell(&self, x: usize, y: usize) -> &[f64] {
        let x = x.min(self.width - 1);
        let y = y.min(self.height - 1);
        let at = (y * self.width + x) * self.channels;
        &self.data[at..at + self.channels]
    }

    fn validate(&self, index: usize) -> Result<(), EmbeddingError> {
        let reason = if self.channels == 0 || self.height == 0 || self.width == 0 {
            "zero-sized"
        } else if !(self.stride > 0.0 && self.stride.is_finite()) {
            "stride must be positive"
        } else if self.data.len() != self.channels * self.height * self.width {
            "data length does not match shape"
        } else {
            return Ok(());
        };
        Err(EmbeddingError::InvalidMap { index, reason })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureMapStack {
    pub maps: Vec<FeatureMap>,
}

impl FeatureMapStack {
    pub fn embedding_len(&self) -> usize {
        self.maps.iter().map(|m| m.channels).sum()
    }
}

/// Reads each map at the cell containing `point` and concatenates the
/// channel vectors in map order. Sampling is nearest-cell.
pub fn sample_embedding(
    stack: &FeatureMapStack,
    point: Centroid,
    expected_len: usize,
) -> Result<Vec<f64>, EmbeddingError> {
    let actual = stack.embedding_len();
    if actual != expected_len {
        return Err(EmbeddingError::LengthMismatch { expected: expected_len, actual });
    }
    let mut out = Vec::with_capacity(expected_len);
    for (index, map) in stack.maps.iter().enumerate() {
        map.validate(index)?;
        let cx = libm::floor(point.x / map.stride).max(0.0) as usize;
        let cy = libm::floor(point.y / map.stride).max(0.0) as usize;
        out.extend_from_slice(map.cell(cx, cy));
    }
    Ok(out)
}

/// Indices of the `capacity` most confident detections, in original order.
/// Equal confidences keep the earlier detection.
pub fn select_most_confident(confidences: &[f64], capacity: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..confidences.len()).collect();
    order.sort_by(|&a, &b| confidences[b].total_cmp(&confidences[a]).then(a.cmp(&b)));
    order.truncate(capacity);
    order.sort_unstable();
    order
}

/// `e x N_m` appearance matrix of one frame; columns past `count` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    capacity: usize,
    count: usize,
    // column-major: column j is data[j * dim..(j + 1) * dim]
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn zeros(dim: usize, capacity: usize) -> Self {
        Self { dim, capacity, count: 0, data: vec![0.0; dim * capacity] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.capacity)
    }
}

/// Stacks embeddings as columns and zero-pads up to `capacity`.
pub fn build_embedding_matrix<E: AsRef<[f64]>>(
    embeddings: &[E],
    dim: usize,
    capacity: usize,
) -> Result<EmbeddingMatrix, EmbeddingError> {
    if embeddings.len() > capacity {
        return Err(EmbeddingError::Overflow { count: embeddings.len(), capacity });
    }
    let mut m = EmbeddingMatrix::zeros(dim, capacity);
    for (j, e) in embeddings.iter().enumerate() {
        let e = e.as_ref();
        if e.len() != dim {
            return Err(EmbeddingError::LengthMismatch { expected: dim, actual: e.len() });
        }
        m.data[j * dim..(j + 1) * dim].copy_from_slice(e);
    }
    m.count = embeddings.len();
    Ok(m)
}
