//! Association core for tracking-by-detection video instance segmentation.
//!
//! Per-frame instance masks and appearance embeddings go in; identity-consistent
//! tracks come out. The crate is `no_std` (it needs `alloc`) and carries no IO:
//! file formats and the command-line driver live in the `segtrack` crate.
//!
//! Module map:
//!
//! - [`mask`]: run-length encoded binary masks, connected components, image
//!   moments, centroids, mask and box IOU.
//! - [`embedding`]: sampling multi-scale feature maps at a mask's sampling
//!   point and building the zero-padded per-frame embedding matrix.
//! - [`affinity`]: raw pairwise scores, entry/exit padding, forward/reverse
//!   softmax normalization and the association losses.
//! - [`motion`]: constant-velocity Kalman filter over box state and gating.
//! - [`assignment`]: rectangular min-cost assignment with forbidden pairs.
//! - [`tracker`]: node memory, median-fused similarity and the matching cascade.
//! - [`metrics`]: HOTA-family evaluation and ID switch counting.
//! - [`simulator`]: seeded synthetic scenarios with ground truth.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod affinity;
pub mod assignment;
pub mod embedding;
pub mod mask;
pub mod matrix;
pub mod metrics;
pub mod motion;
pub mod simulator;
pub mod tracker;

pub use affinity::{AffinityResult, AffinityScorer, CosineScorer, LossReport, NegSqEuclideanScorer};
pub use assignment::{solve_assignment, AssignmentResult};
pub use embedding::{EmbeddingMatrix, FeatureMap, FeatureMapStack, SamplingStrategy};
pub use mask::{BinaryMask, BoundingBox, Centroid};
pub use matrix::Matrix;
pub use metrics::{evaluate, LabeledSequence, MetricsReport};
pub use motion::{KalmanState, MotionConfig};
pub use tracker::{Detection, FrameReport, TrackId, Tracker, TrackerConfig};
