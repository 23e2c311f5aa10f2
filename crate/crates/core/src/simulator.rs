//! Seeded synthetic scenarios standing in for a trained detector.
//!
//! Identities move linearly (reflecting off the image border) with optional
//! sinusoidal jitter and shape deformation. Scripted crossings steer two
//! identities through a common point so their masks overlap. Each detection
//! carries its identity's base embedding plus Gaussian noise.
//!
//! Randomness comes from ChaCha8 seeded with the scenario seed; every purpose
//! (layout, appearance, drops, ordering, confidences) reads its own stream, so
//! changing one knob does not reshuffle the others.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{sample_embedding, sampling_point, EmbeddingError, FeatureMap, FeatureMapStack, SamplingStrategy, DEFAULT_LAYER_PROFILE};
use crate::mask::{BinaryMask, MaskError};
use crate::metrics::LabeledSequence;
use crate::tracker::Detection;

const STREAM_LAYOUT: u64 = 0;
const STREAM_APPEARANCE: u64 = 1;
const STREAM_DROPS: u64 = 2;
const STREAM_ORDER: u64 = 3;
const STREAM_CONFIDENCE: u64 = 4;
const STREAM_FEATURES: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("identity {identity} does not fit inside the {width}x{height} image")]
    OutOfBounds { identity: usize, width: u32, height: u32 },
    #[error("invalid scenario: {0}")]
    Invalid(&'static str),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Rectangle,
    #[default]
    Ellipse,
    /// Fixed elliptical body with a thin horizontal limb whose reach
    /// oscillates; `deformation` scales the reach.
    Articulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingScheme {
    /// Identity `i` gets the `i`-th standard basis vector.
    #[default]
    Orthogonal,
    RandomUnit,
}

/// Two identities steered through a shared point at the middle of
/// `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crossing {
    pub a: usize,
    pub b: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_identities: usize,
    pub n_frames: usize,
    pub width: u32,
    pub height: u32,
    pub shape: ShapeKind,
    /// Range of per-identity base width and height, pixels.
    pub size_min: f64,
    pub size_max: f64,
    /// Range of speeds, pixels per frame.
    pub speed_min: f64,
    pub speed_max: f64,
    pub jitter_amplitude: f64,
    pub jitter_period: f64,
    /// Relative amplitude of the width/height oscillation, in `[0, 1)`.
    pub deformation: f64,
    pub deformation_period: f64,
    pub embedding_scheme: EmbeddingScheme,
    pub embedding_len: usize,
    /// Expected norm of the noise added to a unit base vector.
    pub embedding_noise: f64,
    pub drop_probability: f64,
    pub crossings: Vec<Crossing>,
    /// Give identities random lifespans instead of full presence.
    pub entry_exit: bool,
    pub shuffle_detections: bool,
    pub max_instances: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_identities: 10,
            n_frames: 100,
            width: 640,
            height: 480,
            shape: ShapeKind::Ellipse,
            size_min: 40.0,
            size_max: 80.0,
            speed_min: 0.5,
            speed_max: 2.5,
            jitter_amplitude: 0.0,
            jitter_period: 12.0,
            deformation: 0.0,
            deformation_period: 10.0,
            embedding_scheme: EmbeddingScheme::Orthogonal,
            embedding_len: 352,
            embedding_noise: 0.0,
            drop_probability: 0.0,
            crossings: Vec::new(),
            entry_exit: false,
            shuffle_detections: true,
            max_instances: 50,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Ten noise-free identities over 100 frames with two scripted crossings.
    pub fn clean(seed: u64) -> Self {
        Self {
            crossings: vec![Crossing { a: 0, b: 1, start: 20, end: 40 }, Crossing { a: 2, b: 3, start: 50, end: 70 }],
            seed,
            ..Self::default()
        }
    }

    /// [`ScenarioConfig::clean`] with appearance noise and missed detections.
    pub fn noisy(seed: u64, noise: f64, drop_probability: f64) -> Self {
        Self { embedding_noise: noise, drop_probability, ..Self::clean(seed) }
    }

    /// Crowded, articulated, weakly distinctive identities. Appearance alone
    /// is unreliable here, so motion gating and overlap matching matter.
    pub fn deformation(seed: u64) -> Self {
        Self {
            n_identities: 12,
            n_frames: 60,
            width: 320,
            height: 240,
            shape: ShapeKind::Articulated,
            size_min: 28.0,
            size_max: 44.0,
            speed_min: 1.0,
            speed_max: 3.0,
            jitter_amplitude: 0.5,
            jitter_period: 9.0,
            deformation: 0.3,
            deformation_period: 20.0,
            embedding_scheme: EmbeddingScheme::RandomUnit,
            embedding_len: 16,
            embedding_noise: 0.8,
            drop_probability: 0.05,
            crossings: vec![Crossing { a: 0, b: 1, start: 10, end: 30 }, Crossing { a: 2, b: 3, start: 25, end: 45 }],
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        use SimulationError::Invalid;
        if self.n_identities == 0 || self.n_frames == 0 {
            return Err(Invalid("need at least one identity and one frame"));
        }
        if self.n_identities > self.max_instances {
            return Err(Invalid("more identities than max_instances"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Invalid("image must be non-empty"));
        }
        if !(self.size_min >= 2.0 && self.size_max >= self.size_min) {
            return Err(Invalid("size range must satisfy 2 <= size_min <= size_max"));
        }
        if !(self.speed_min >= 0.0 && self.speed_max >= self.speed_min) {
            return Err(Invalid("speed range must satisfy 0 <= speed_min <= speed_max"));
        }
        if !(0.0..1.0).contains(&self.deformation) {
            return Err(Invalid("deformation must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(Invalid("drop_probability must lie in [0, 1]"));
        }
        if !(self.embedding_noise >= 0.0) || !(self.jitter_amplitude >= 0.0) {
            return Err(Invalid("noise and jitter must be non-negative"));
        }
        if self.jitter_period <= 0.0 || self.deformation_period <= 0.0 {
            return Err(Invalid("periods must be positive"));
        }
        if self.embedding_len == 0 {
            return Err(Invalid("embedding_len must be positive"));
        }
        if self.embedding_scheme == EmbeddingScheme::Orthogonal && self.n_identities > self.embedding_len {
            return Err(Invalid("orthogonal embeddings need embedding_len >= n_identities"));
        }
        let mut seen = vec![false; self.n_identities];
        for c in &self.crossings {
            if c.a >= self.n_identities || c.b >= self.n_identities || c.a == c.b {
                return Err(Invalid("crossing names an unknown identity"));
            }
            if c.start > c.end || c.end >= self.n_frames {
                return Err(Invalid("crossing window outside the sequence"));
            }
            if seen[c.a] || seen[c.b] {
                return Err(Invalid("an identity may take part in one crossing only"));
            }
            seen[c.a] = true;
            seen[c.b] = true;
        }
        Ok(())
    }
}

/// Reflects `x` into `[lo, hi]` like a ball bouncing between walls.
fn fold(x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        return lo;
    }
    let period = 2.0 * span;
    let mut y = libm::fmod(x - lo, period);
    if y < 0.0 {
        y += period;
    }
    if y > span {
        y = period - y;
    }
    lo + y
}

/// Rectangle or ellipse centered at `(cx, cy)`; a pixel is inside when its
/// center is.
pub fn rasterize(shape: ShapeKind, width: u32, height: u32, cx: f64, cy: f64, w: f64, h: f64) -> Result<BinaryMask, MaskError> {
    let (hw, hh) = (w / 2.0, h / 2.0);
    let y0 = libm::ceil(cy - hh) as i64;
    let y1 = libm::floor(cy + hh) as i64;
    let spans = (y0..=y1).filter_map(move |y| {
        let half = match shape {
            ShapeKind::Rectangle => hw,
            ShapeKind::Ellipse | ShapeKind::Articulated => {
                let t = (y as f64 - cy) / hh;
                hw * libm::sqrt((1.0 - t * t).max(0.0))
            }
        };
        let x0 = libm::ceil(cx - half) as i64;
        let x1 = libm::floor(cx + half) as i64;
        (x1 >= x0).then_some((y, x0, x1 + 1))
    });
    BinaryMask::from_row_spans(width, height, spans)
}

/// Elliptical body plus a bar of the given thickness from the center out to
/// `cx + reach`.
pub fn rasterize_articulated(
    width: u32,
    height: u32,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    reach: f64,
    thickness: f64,
) -> Result<BinaryMask, MaskError> {
    let body = rasterize(ShapeKind::Ellipse, width, height, cx, cy, w, h)?;
    let (a, b) = if reach >= 0.0 { (cx, cx + reach) } else { (cx + reach, cx) };
    let x0 = libm::ceil(a) as i64;
    let x1 = libm::floor(b) as i64 + 1;
    let y0 = libm::ceil(cy - thickness / 2.0) as i64;
    let y1 = libm::floor(cy + thickness / 2.0) as i64;
    let spans = body
        .row_segments()
        .map(|(y, s, e)| (y as i64, s as i64, e as i64))
        .chain((y0..=y1).map(|y| (y, x0, x1)))
        .collect::<Vec<_>>();
    BinaryMask::from_row_spans(width, height, spans)
}

#[derive(Debug, Clone)]
struct Motion {
    size: (f64, f64),
    start: (f64, f64),
    velocity: (f64, f64),
    lo: (f64, f64),
    hi: (f64, f64),
    jitter_phase: (f64, f64),
    deform_phase: f64,
    span: (usize, usize),
}

impl Motion {
    fn center(&self, cfg: &ScenarioConfig, t: f64) -> (f64, f64) {
        let w = 2.0 * PI / cfg.jitter_period;
        let jx = cfg.jitter_amplitude * libm::sin(w * t + self.jitter_phase.0);
        let jy = cfg.jitter_amplitude * libm::sin(w * t + self.jitter_phase.1);
        (
            fold(self.start.0 + self.velocity.0 * t, self.lo.0, self.hi.0) + jx,
            fold(self.start.1 + self.velocity.1 * t, self.lo.1, self.hi.1) + jy,
        )
    }

    fn phase(&self, cfg: &ScenarioConfig, t: f64) -> f64 {
        libm::sin(2.0 * PI * t / cfg.deformation_period + self.deform_phase)
    }

    fn extent(&self, cfg: &ScenarioConfig, t: f64) -> (f64, f64) {
        let s = cfg.deformation * self.phase(cfg, t);
        (self.size.0 * (1.0 + s), self.size.1 * (1.0 - s))
    }

    /// Signed limb reach from the body center.
    fn reach(&self, cfg: &ScenarioConfig, t: f64) -> f64 {
        let side = if self.deform_phase < PI { 1.0 } else { -1.0 };
        side * (self.size.0 / 2.0 + cfg.deformation * self.size.0 * (1.0 + self.phase(cfg, t)))
    }

    fn mask(&self, cfg: &ScenarioConfig, t: f64) -> Result<BinaryMask, MaskError> {
        let (cx, cy) = self.center(cfg, t);
        match cfg.shape {
            ShapeKind::Articulated => {
                let thickness = (self.size.1 / 6.0).max(2.0);
                rasterize_articulated(cfg.width, cfg.height, cx, cy, self.size.0, self.size.1, self.reach(cfg, t), thickness)
            }
            shape => {
                let (w, h) = self.extent(cfg, t);
                rasterize(shape, cfg.width, cfg.height, cx, cy, w, h)
            }
        }
    }
}

/// Ground truth plus the detection stream derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub gt: LabeledSequence,
    pub detections: Vec<Vec<Detection>>,
    /// GT identity of each detection, aligned with `detections`.
    pub detection_ids: Vec<Vec<u64>>,
    /// Unit base embedding per identity.
    pub bases: Vec<Vec<f64>>,
}

fn random_unit(r: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..len).map(|_| r.sample(StandardNormal)).collect();
        let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario, SimulationError> {
    cfg.validate()?;
    let n = cfg.n_identities;
    let frames = cfg.n_frames;
    let mut layout = rng(cfg.seed, STREAM_LAYOUT);
    let margin = cfg.jitter_amplitude + 1.0;
    let mut motions = Vec::with_capacity(n);
    for identity in 0..n {
        let size = (
            layout.random_range(cfg.size_min..=cfg.size_max),
            layout.random_range(cfg.size_min..=cfg.size_max),
        );
        let lo = match cfg.shape {
            ShapeKind::Articulated => (size.0 * (0.5 + 2.0 * cfg.deformation) + margin, size.1 / 2.0 + margin),
            _ => {
                let grow = 1.0 + cfg.deformation;
                (size.0 * grow / 2.0 + margin, size.1 * grow / 2.0 + margin)
            }
        };
        let hi = (cfg.width as f64 - 1.0 - lo.0, cfg.height as f64 - 1.0 - lo.1);
        if hi.0 < lo.0 || hi.1 < lo.1 {
            return Err(SimulationError::OutOfBounds { identity, width: cfg.width, height: cfg.height });
        }
        let start = (layout.random_range(lo.0..=hi.0), layout.random_range(lo.1..=hi.1));
        let speed = layout.random_range(cfg.speed_min..=cfg.speed_max);
        let heading = layout.random_range(0.0..2.0 * PI);
        let jitter_phase = (layout.random_range(0.0..2.0 * PI), layout.random_range(0.0..2.0 * PI));
        let deform_phase = layout.random_range(0.0..2.0 * PI);
        let span = if cfg.entry_exit {
            let a = layout.random_range(0..=frames / 3);
            let b = layout.random_range((2 * frames / 3).max(a + 1)..=frames);
            (a, b)
        } else {
            (0, frames)
        };
        motions.push(Motion {
            size,
            start,
            velocity: (speed * libm::cos(heading), speed * libm::sin(heading)),
            lo,
            hi,
            jitter_phase,
            deform_phase,
            span,
        });
    }
    for c in &cfg.crossings {
        let mid = (c.start + c.end) as f64 / 2.0;
        let (ma, mb) = (&motions[c.a], &motions[c.b]);
        let lo = (ma.lo.0.max(mb.lo.0), ma.lo.1.max(mb.lo.1));
        let hi = (ma.hi.0.min(mb.hi.0), ma.hi.1.min(mb.hi.1));
        let meet = (layout.random_range(lo.0..=hi.0), layout.random_range(lo.1..=hi.1));
        // b travels against a
        let (va, speed_b) = (ma.velocity, libm::hypot(mb.velocity.0, mb.velocity.1));
        let speed_a = libm::hypot(va.0, va.1).max(1e-9);
        let vb = (-va.0 / speed_a * speed_b, -va.1 / speed_a * speed_b);
        for (idx, v) in [(c.a, va), (c.b, vb)] {
            let m = &mut motions[idx];
            m.velocity = v;
            m.start = (meet.0 - v.0 * mid, meet.1 - v.1 * mid);
            m.span = (0, frames);
        }
    }

    let mut appearance = rng(cfg.seed, STREAM_APPEARANCE);
    let e = cfg.embedding_len;
    let bases: Vec<Vec<f64>> = (0..n)
        .map(|i| match cfg.embedding_scheme {
            EmbeddingScheme::Orthogonal => {
                let mut v = vec![0.0; e];
                v[i] = 1.0;
                v
            }
            EmbeddingScheme::RandomUnit => random_unit(&mut appearance, e),
        })
        .collect();
    let noise_std = cfg.embedding_noise / libm::sqrt(e as f64);

    let mut drops = rng(cfg.seed, STREAM_DROPS);
    let mut order = rng(cfg.seed, STREAM_ORDER);
    let mut confidence = rng(cfg.seed, STREAM_CONFIDENCE);
    let mut gt_frames = Vec::with_capacity(frames);
    let mut detections = Vec::with_capacity(frames);
    let mut detection_ids = Vec::with_capacity(frames);
    for f in 0..frames {
        let t = f as f64;
        let mut gt_frame = Vec::new();
        let mut dets = Vec::new();
        for (i, m) in motions.iter().enumerate() {
            let dropped = drops.random::<f64>() < cfg.drop_probability;
            let score = confidence.random_range(0.5..1.0);
            if f < m.span.0 || f >= m.span.1 {
                continue;
            }
            let mask = m.mask(cfg, t)?;
            if mask.is_empty() {
                continue;
            }
            let id = i as u64 + 1;
            gt_frame.push((id, mask.clone()));
            let mut emb = bases[i].clone();
            if noise_std > 0.0 {
                for v in emb.iter_mut() {
                    *v += noise_std * appearance.sample::<f64, _>(StandardNormal);
                }
                let norm = libm::sqrt(emb.iter().map(|x| x * x).sum::<f64>());
                if norm > 0.0 {
                    emb.iter_mut().for_each(|x| *x /= norm);
                }
            }
            if !dropped {
                dets.push((id, Detection::new(f as u64, mask, score, emb)?));
            }
        }
        if cfg.shuffle_detections {
            dets.shuffle(&mut order);
        }
        detection_ids.push(dets.iter().map(|(id, _)| *id).collect());
        detections.push(dets.into_iter().map(|(_, d)| d).collect());
        gt_frames.push(gt_frame);
    }
    let gt = LabeledSequence { width: cfg.width, height: cfg.height, frames: gt_frames };
    Ok(Scenario { gt, detections, detection_ids, bases })
}

/// Parameters of the coincident-box-center fixture family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureConfig {
    pub seed: u64,
    pub n_frames: usize,
    pub width: u32,
    pub height: u32,
    /// `(channels, stride)` per synthetic feature map.
    pub profile: Vec<(usize, f64)>,
    /// Per-channel Gaussian noise on feature cells.
    pub feature_noise: f64,
    /// Frames between quarter turns of both shapes; 0 keeps them fixed.
    pub rotation_period: usize,
    pub shuffle_detections: bool,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_frames: 30,
            width: 192,
            height: 144,
            profile: DEFAULT_LAYER_PROFILE.to_vec(),
            feature_noise: 0.02,
            rotation_period: 1,
            shuffle_detections: true,
        }
    }
}

/// Two identities sharing one square bounding box. Each is the square minus
/// one quadrant, `B` missing the quadrant opposite to `A`'s, so box centers
/// coincide exactly while the moment centroids sit in opposite quadrants.
/// `B` is drawn over `A` where they overlap. Both shapes turn a quarter
/// clockwise every `rotation_period` frames; with a period of one, a mask's
/// overlap with its own predecessor equals its overlap with the other
/// identity's predecessor.
#[derive(Debug, Clone)]
pub struct FixtureScenario {
    pub config: FixtureConfig,
    pub gt: LabeledSequence,
    /// `(x0, y0)` of the shared square per frame.
    pub corners: Vec<(i64, i64)>,
    pub side: i64,
    /// Unit base vector per label: background, A, B.
    pub bases: [Vec<f64>; 3],
    /// Detection order per frame, as GT ids.
    pub orders: Vec<Vec<u64>>,
}

pub const FIXTURE_ID_A: u64 = 1;
pub const FIXTURE_ID_B: u64 = 2;

/// Quadrants clockwise from top-right.
fn quadrant(dx: i64, dy: i64, half: i64) -> usize {
    match (dx >= half, dy >= half) {
        (true, false) => 0,
        (true, true) => 1,
        (false, true) => 2,
        (false, false) => 3,
    }
}

pub fn center_coincidence_fixture(cfg: &FixtureConfig) -> Result<FixtureScenario, SimulationError> {
    if cfg.profile.is_empty() || cfg.profile.iter().any(|&(c, s)| c == 0 || !(s > 0.0)) {
        return Err(SimulationError::Invalid("feature profile needs positive channels and strides"));
    }
    if cfg.n_frames == 0 {
        return Err(SimulationError::Invalid("need at least one frame"));
    }
    let mut layout = rng(cfg.seed, STREAM_LAYOUT);
    let side = 2 * layout.random_range(28..=40i64);
    let travel = cfg.n_frames as f64;
    let vx = layout.random_range(-1.5..=1.5);
    let vy = layout.random_range(-1.0..=1.0);
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let span_x = libm::floor(w - side as f64 - (vx * travel).abs());
    let span_y = libm::floor(h - side as f64 - (vy * travel).abs());
    if span_x < 0.0 || span_y < 0.0 {
        return Err(SimulationError::OutOfBounds { identity: 0, width: cfg.width, height: cfg.height });
    }
    let sx = layout.random_range(0.0..=span_x) + if vx < 0.0 { -vx * travel } else { 0.0 };
    let sy = layout.random_range(0.0..=span_y) + if vy < 0.0 { -vy * travel } else { 0.0 };
    let corners: Vec<(i64, i64)> = (0..cfg.n_frames)
        .map(|f| {
            let t = f as f64;
            (libm::round(sx + vx * t) as i64, libm::round(sy + vy * t) as i64)
        })
        .collect();

    let e: usize = cfg.profile.iter().map(|p| p.0).sum();
    let mut appearance = rng(cfg.seed, STREAM_APPEARANCE);
    let bases = [random_unit(&mut appearance, e), random_unit(&mut appearance, e), random_unit(&mut appearance, e)];

    let mut order = rng(cfg.seed, STREAM_ORDER);
    let mut scenario = FixtureScenario {
        config: cfg.clone(),
        gt: LabeledSequence { width: cfg.width, height: cfg.height, frames: Vec::with_capacity(cfg.n_frames) },
        corners,
        side,
        bases,
        orders: Vec::with_capacity(cfg.n_frames),
    };
    for f in 0..cfg.n_frames {
        let missing = scenario.missing_quadrant(f);
        let a = scenario.quadrant_mask(f, missing)?;
        let b = scenario.quadrant_mask(f, (missing + 2) % 4)?;
        scenario.gt.frames.push(vec![(FIXTURE_ID_A, a), (FIXTURE_ID_B, b)]);
        let mut ids = vec![FIXTURE_ID_A, FIXTURE_ID_B];
        if cfg.shuffle_detections {
            ids.shuffle(&mut order);
        }
        scenario.orders.push(ids);
    }
    Ok(scenario)
}

impl FixtureScenario {
    /// Quadrant missing from `A` in a frame.
    pub fn missing_quadrant(&self, frame: usize) -> usize {
        match self.config.rotation_period {
            0 => 0,
            p => (frame / p) % 4,
        }
    }

    fn quadrant_mask(&self, frame: usize, missing: usize) -> Result<BinaryMask, MaskError> {
        let (x0, y0) = self.corners[frame];
        let half = self.side / 2;
        let spans = (0..self.side).filter_map(move |dy| {
            let left = quadrant(0, dy, half) != missing;
            let right = quadrant(half, dy, half) != missing;
            let y = y0 + dy;
            match (left, right) {
                (true, true) => Some((y, x0, x0 + self.side)),
                (true, false) => Some((y, x0, x0 + half)),
                (false, true) => Some((y, x0 + half, x0 + self.side)),
                (false, false) => None,
            }
        });
        BinaryMask::from_row_spans(self.config.width, self.config.height, spans)
    }

    /// 0 background, 1 A, 2 B (B on top) at an image pixel.
    pub fn label_at(&self, frame: usize, x: i64, y: i64) -> usize {
        let (x0, y0) = self.corners[frame];
        let (dx, dy) = (x - x0, y - y0);
        if dx < 0 || dy < 0 || dx >= self.side || dy >= self.side {
            return 0;
        }
        let missing_a = self.missing_quadrant(frame);
        if quadrant(dx, dy, self.side / 2) == (missing_a + 2) % 4 {
            1
        } else {
            2
        }
    }

    /// Feature maps of a frame: each cell holds the slice of its label's base
    /// vector belonging to that map, plus noise. The label of a cell is the
    /// label of the pixel at the cell center.
    pub fn feature_stack(&self, frame: usize) -> FeatureMapStack {
        let mut noise = rng(self.config.seed, STREAM_FEATURES + frame as u64);
        let sigma = self.config.feature_noise;
        let mut offset = 0;
        let maps = self
            .config
            .profile
            .iter()
            .map(|&(channels, stride)| {
                let cw = libm::ceil(self.config.width as f64 / stride) as usize;
                let ch = libm::ceil(self.config.height as f64 / stride) as usize;
                let map = FeatureMap::from_fn(channels, ch, cw, stride, |x, y, out| {
                    let px = libm::floor((x as f64 + 0.5) * stride) as i64;
                    let py = libm::floor((y as f64 + 0.5) * stride) as i64;
                    let base = &self.bases[self.label_at(frame, px, py)];
                    out.copy_from_slice(&base[offset..offset + channels]);
                    if sigma > 0.0 {
                        for v in out.iter_mut() {
                            *v += sigma * noise.sample::<f64, _>(StandardNormal);
                        }
                    }
                });
                offset += channels;
                map
            })
            .collect();
        FeatureMapStack { maps }
    }

    pub fn embedding_len(&self) -> usize {
        self.config.profile.iter().map(|p| p.0).sum()
    }

    /// Detections of a frame in their shuffled order, embeddings sampled from
    /// `stack` with the given strategy. Returns the GT id of each detection
    /// alongside.
    pub fn detections_with(
        &self,
        frame: usize,
        stack: &FeatureMapStack,
        strategy: SamplingStrategy,
    ) -> Result<(Vec<Detection>, Vec<u64>), SimulationError> {
        let mut dets = Vec::new();
        for &id in &self.orders[frame] {
            let mask = &self.gt.frames[frame].iter().find(|(i, _)| *i == id).expect("fixture id").1;
            let point = sampling_point(mask, strategy)?;
            let emb = sample_embedding(stack, point, self.embedding_len())?;
            dets.push(Detection::new(frame as u64, mask.clone(), 0.9, emb)?);
        }
        Ok((dets, self.orders[frame].clone()))
    }
}
