//! Run-length encoded binary masks and the geometry built on them.
//!
//! Runs are row-major and background-first: `runs[0]` counts leading
//! background pixels (possibly zero), then foreground and background runs
//! alternate. Pixel `(x, y)` sits at linear index `y * width + x`, and all
//! coordinates are zero-based pixel centers.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("mask dimensions must be positive, got {width}x{height}")]
    ZeroDimension { width: u32, height: u32 },
    #[error("run lengths sum to {actual}, expected {expected}")]
    RunSumMismatch { expected: u64, actual: u64 },
    #[error("run {index} is zero; only the leading background run may be zero")]
    ZeroRun { index: usize },
    #[error("pixel grid has {actual} cells, expected {expected}")]
    GridSizeMismatch { expected: usize, actual: usize },
    #[error("empty mask")]
    Empty,
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
}

/// A binary segmentation bitmap stored as canonical run lengths.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawMask", into = "RawMask")]
pub struct BinaryMask {
    width: u32,
    height: u32,
    runs: Vec<u32>,
}

/// Wire form, `{"w":W,"h":H,"runs":[...]}`.
#[derive(Serialize, Deserialize)]
struct RawMask {
    w: u32,
    h: u32,
    runs: Vec<u32>,
}

impl TryFrom<RawMask> for BinaryMask {
    type Error = MaskError;

    fn try_from(raw: RawMask) -> Result<Self, Self::Error> {
        BinaryMask::from_runs(raw.w, raw.h, raw.runs)
    }
}

impl From<BinaryMask> for RawMask {
    fn from(m: BinaryMask) -> Self {
        RawMask { w: m.width, h: m.height, runs: m.runs }
    }
}

/// Accumulates foreground intervals in increasing linear order.
struct RunBuilder {
    total: u64,
    runs: Vec<u32>,
    cursor: u64,
}

impl RunBuilder {
    fn new(total: u64) -> Self {
        Self { total, runs: Vec::new(), cursor: 0 }
    }

    /// Adds foreground pixels `[start, start + len)`; `start >= cursor`.
    fn push(&mut self, start: u64, len: u64) {
        if len == 0 {
            return;
        }
        debug_assert!(start >= self.cursor);
        if start == self.cursor && !self.runs.is_empty() {
            // touches the previous foreground run
            *self.runs.last_mut().unwrap() += len as u32;
        } else {
            self.runs.push((start - self.cursor) as u32);
            self.runs.push(len as u32);
        }
        self.cursor = start + len;
    }

    fn finish(mut self) -> Vec<u32> {
        if self.runs.is_empty() {
            return vec![self.total as u32];
        }
        if self.cursor < self.total {
            self.runs.push((self.total - self.cursor) as u32);
        }
        self.runs
    }
}

impl BinaryMask {
    /// Validates and wraps raw runs. Rejects non-canonical encodings.
    pub fn from_runs(width: u32, height: u32, runs: Vec<u32>) -> Result<Self, MaskError> {
        check_dims(width, height)?;
        let expected = width as u64 * height as u64;
        let actual: u64 = runs.iter().map(|&r| r as u64).sum();
        if actual != expected {
            return Err(MaskError::RunSumMismatch { expected, actual });
        }
        if let Some(index) = runs.iter().skip(1).position(|&r| r == 0) {
            return Err(MaskError::ZeroRun { index: index + 1 });
        }
        if runs.len() == 1 && runs[0] == 0 {
            return Err(MaskError::ZeroRun { index: 0 });
        }
        Ok(Self { width, height, runs })
    }

    /// All-background mask.
    pub fn empty(width: u32, height: u32) -> Result<Self, MaskError> {
        check_dims(width, height)?;
        Ok(Self { width, height, runs: vec![width * height] })
    }

    /// Encodes a row-major pixel grid.
    pub fn encode(width: u32, height: u32, pixels: &[bool]) -> Result<Self, MaskError> {
        check_dims(width, height)?;
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(MaskError::GridSizeMismatch { expected, actual: pixels.len() });
        }
        let mut builder = RunBuilder::new(expected as u64);
        let mut i = 0;
        while i < pixels.len() {
            if pixels[i] {
                let start = i;
                while i < pixels.len() && pixels[i] {
                    i += 1;
                }
                builder.push(start as u64, (i - start) as u64);
            } else {
                i += 1;
            }
        }
        Ok(Self { width, height, runs: builder.finish() })
    }

    /// Builds a mask from per-row foreground spans `(y, x_start, x_end)`,
    /// `x_end` exclusive. Spans are clipped to the image, then sorted and
    /// merged, so callers may pass them in any order.
    pub fn from_row_spans(
        width: u32,
        height: u32,
        spans: impl IntoIterator<Item = (i64, i64, i64)>,
    ) -> Result<Self, MaskError> {
        check_dims(width, height)?;
        let mut clipped: Vec<(u64, u64)> = spans
            .into_iter()
            .filter(|&(y, _, _)| y >= 0 && y < height as i64)
            .filter_map(|(y, x0, x1)| {
                let x0 = x0.clamp(0, width as i64);
                let x1 = x1.clamp(0, width as i64);
                (x1 > x0).then(|| {
                    let base = y as u64 * width as u64;
                    (base + x0 as u64, base + x1 as u64)
                })
            })
            .collect();
        clipped.sort_unstable();
        let mut builder = RunBuilder::new(width as u64 * height as u64);
        let mut current: Option<(u64, u64)> = None;
        for (s, e) in clipped {
            match current {
                Some((cs, ce)) if s <= ce => current = Some((cs, ce.max(e))),
                Some((cs, ce)) => {
                    builder.push(cs, ce - cs);
                    current = Some((s, e));
                }
                None => current = Some((s, e)),
            }
        }
        if let Some((cs, ce)) = current {
            builder.push(cs, ce - cs);
        }
        Ok(Self { width, height, runs: builder.finish() })
    }

    /// Row-major pixel grid.
    pub fn decode(&self) -> Vec<bool> {
        let mut out = vec![false; self.width as usize * self.height as usize];
        for (start, len) in self.intervals() {
            out[start as usize..(start + len) as usize].fill(true);
        }
        out
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    pub fn area(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).map(|&r| r as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.len() == 1
    }

    pub fn same_dims(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        if x >= self.width || y >= self.height {
            return false;
        }
        let idx = y as u64 * self.width as u64 + x as u64;
        self.intervals().any(|(s, l)| idx >= s && idx < s + l)
    }

    /// Foreground intervals `(start, len)` in linear index space.
    pub fn intervals(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.runs.iter().enumerate().filter_map(move |(i, &r)| {
            let start = pos;
            pos += r as u64;
            (i % 2 == 1).then_some((start, r as u64))
        })
    }

    /// Foreground intervals split at row boundaries: `(y, x_start, x_end)`.
    pub fn row_segments(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        let w = self.width as u64;
        self.intervals().flat_map(move |(start, len)| {
            let end = start + len;
            let first_row = start / w;
            let last_row = (end - 1) / w;
            (first_row..=last_row).map(move |y| {
                let row_start = y * w;
                let x0 = start.max(row_start) - row_start;
                let x1 = end.min(row_start + w) - row_start;
                (y as u32, x0 as u32, x1 as u32)
            })
        })
    }

    /// Number of foreground pixels shared with `other`.
    pub fn intersection_area(&self, other: &BinaryMask) -> Result<u64, MaskError> {
        self.check_same_dims(other)?;
        let mut a = self.intervals().peekable();
        let mut b = other.intervals().peekable();
        let mut total = 0;
        while let (Some(&(sa, la)), Some(&(sb, lb))) = (a.peek(), b.peek()) {
            let (ea, eb) = (sa + la, sb + lb);
            let lo = sa.max(sb);
            let hi = ea.min(eb);
            if hi > lo {
                total += hi - lo;
            }
            if ea <= eb {
                a.next();
            } else {
                b.next();
            }
        }
        Ok(total)
    }

    fn check_same_dims(&self, other: &BinaryMask) -> Result<(), MaskError> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(MaskError::DimensionMismatch(self.width, self.height, other.width, other.height))
        }
    }
}

fn check_dims(width: u32, height: u32) -> Result<(), MaskError> {
    if width == 0 || height == 0 {
        Err(MaskError::ZeroDimension { width, height })
    } else {
        Ok(())
    }
}

/// Axis-aligned box in pixel-center coordinates, bounds inclusive.
///
/// A box produced by [`bbox_of`] spans the centers of its extreme pixels, so a
/// single pixel at `(3, 2)` yields `(3, 2, 3, 2)`. [`bbox_iou`] measures the
/// pixel cells the box covers, i.e. half a pixel beyond each bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self { x_min, y_min, x_max, y_max }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    /// The box grown by half a pixel on every side: the area its pixels cover.
    pub fn cell_extent(&self) -> BoundingBox {
        BoundingBox::new(self.x_min - 0.5, self.y_min - 0.5, self.x_max + 0.5, self.y_max + 0.5)
    }
}

/// Sampling point in input-image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub x: f64,
    pub y: f64,
}

pub fn encode_rle(width: u32, height: u32, pixels: &[bool]) -> Result<BinaryMask, MaskError> {
    BinaryMask::encode(width, height, pixels)
}

pub fn decode_rle(mask: &BinaryMask) -> Vec<bool> {
    mask.decode()
}

/// Largest 8-connected foreground component.
///
/// Components are labelled over row segments with a union-find; equal areas
/// resolve to the component whose first pixel comes first in scan order.
pub fn max_area_component(mask: &BinaryMask) -> Result<BinaryMask, MaskError> {
    if mask.is_empty() {
        return Err(MaskError::Empty);
    }
    let segments: Vec<(u32, u32, u32)> = mask.row_segments().collect();
    let mut parent: Vec<usize> = (0..segments.len()).collect();

    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }

    // segments are sorted by (y, x); link each row against the one above
    let mut prev = 0..0;
    let mut i = 0;
    while i < segments.len() {
        let y = segments[i].0;
        let start = i;
        while i < segments.len() && segments[i].0 == y {
            i += 1;
        }
        if !prev.is_empty() && segments[prev.start].0 + 1 == y {
            for a in start..i {
                let (_, x0, x1) = segments[a];
                for b in prev.clone() {
                    let (_, px0, px1) = segments[b];
                    // 8-connected: ranges touch once widened by one pixel
                    if px0 <= x1 && x0 <= px1 {
                        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                        if ra != rb {
                            // keep the smaller index as root: it is the scan-order first
                            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                            parent[hi] = lo;
                        }
                    }
                }
            }
        }
        prev = start..i;
    }

    let mut area = vec![0u64; segments.len()];
    for i in 0..segments.len() {
        let r = find(&mut parent, i);
        area[r] += (segments[i].2 - segments[i].1) as u64;
    }
    // roots are the smallest segment index of each component, and segment
    // order is scan order, so the first root reaching the max wins ties
    let mut best = 0;
    for i in 0..segments.len() {
        if parent[i] == i && area[i] > area[best] {
            best = i;
        }
    }
    let spans = (0..segments.len())
        .filter(|&i| find(&mut parent, i) == best)
        .map(|i| {
            let (y, x0, x1) = segments[i];
            (y as i64, x0 as i64, x1 as i64)
        })
        .collect::<Vec<_>>();
    BinaryMask::from_row_spans(mask.width, mask.height, spans)
}

fn ipow(base: f64, exp: u32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..exp {
        acc *= base;
    }
    acc
}

/// Raw image moment `m_pq = sum x^p * y^q` over foreground pixels, summed in
/// scan order.
pub fn moment(mask: &BinaryMask, p: u32, q: u32) -> f64 {
    let mut sum = 0.0;
    for (y, x0, x1) in mask.row_segments() {
        let yq = ipow(y as f64, q);
        for x in x0..x1 {
            sum += ipow(x as f64, p) * yq;
        }
    }
    sum
}

/// Moment centroid `(m10 / m00, m01 / m00)` of the maximum-area component.
pub fn centroid(mask: &BinaryMask) -> Result<Centroid, MaskError> {
    let component = max_area_component(mask)?;
    let m00 = moment(&component, 0, 0);
    Ok(Centroid { x: moment(&component, 1, 0) / m00, y: moment(&component, 0, 1) / m00 })
}

pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MaskError> {
    let inter = a.intersection_area(b)?;
    let union = a.area() + b.area() - inter;
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

pub fn bbox_of(mask: &BinaryMask) -> Result<BoundingBox, MaskError> {
    let mut segments = mask.row_segments();
    let (y0, x0, x1) = segments.next().ok_or(MaskError::Empty)?;
    let (mut x_min, mut x_max, mut y_max) = (x0, x1 - 1, y0);
    for (y, s, e) in segments {
        x_min = x_min.min(s);
        x_max = x_max.max(e - 1);
        y_max = y;
    }
    Ok(BoundingBox::new(x_min as f64, y0 as f64, x_max as f64, y_max as f64))
}

/// Intersection over union of the pixel cells two boxes cover.
pub fn bbox_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (a, b) = (a.cell_extent(), b.cell_extent());
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = a.width() * a.height() + b.width() * b.height() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}
