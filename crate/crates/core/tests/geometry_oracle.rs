use std::collections::VecDeque;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segtrack_core::mask::{
    bbox_iou, bbox_of, centroid, decode_rle, encode_rle, mask_iou, max_area_component, moment, BinaryMask,
    BoundingBox,
};

const W: u32 = 64;
const H: u32 = 64;

/// Blobby random mask: a few random rectangles plus salt noise.
fn random_pixels(rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut px = vec![false; (W * H) as usize];
    for _ in 0..rng.random_range(0..6) {
        let (x0, y0) = (rng.random_range(0..W), rng.random_range(0..H));
        let (w, h) = (rng.random_range(1..20), rng.random_range(1..20));
        for y in y0..(y0 + h).min(H) {
            for x in x0..(x0 + w).min(W) {
                px[(y * W + x) as usize] = true;
            }
        }
    }
    let density = rng.random_range(0.0..0.3);
    for p in px.iter_mut() {
        if rng.random::<f64>() < density {
            *p = !*p;
        }
    }
    px
}

/// Components by breadth-first flood fill; returns the largest, earliest
/// first-pixel winning ties.
fn flood_fill_largest(px: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut label = vec![usize::MAX; px.len()];
    let mut best: Option<(usize, usize)> = None;
    let mut next = 0;
    for start in 0..px.len() {
        if !px[start] || label[start] != usize::MAX {
            continue;
        }
        let mut size = 0;
        let mut queue = VecDeque::from([start]);
        label[start] = next;
        while let Some(p) = queue.pop_front() {
            size += 1;
            let (x, y) = ((p % w) as i64, (p / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if px[q] && label[q] == usize::MAX {
                        label[q] = next;
                        queue.push_back(q);
                    }
                }
            }
        }
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((next, size));
        }
        next += 1;
    }
    match best {
        Some((l, _)) => label.iter().map(|&x| x == l).collect(),
        None => vec![false; px.len()],
    }
}

fn moment_oracle(px: &[bool], p: u32, q: u32) -> f64 {
    let mut s = 0.0;
    for (i, &on) in px.iter().enumerate() {
        if on {
            let (x, y) = ((i as u32 % W) as f64, (i as u32 / W) as f64);
            s += x.powi(p as i32) * y.powi(q as i32);
        }
    }
    s
}

#[test]
fn geometry_matches_pixel_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut prev: Option<(Vec<bool>, BinaryMask)> = None;
    for _ in 0..500 {
        let px = random_pixels(&mut rng);
        let mask = encode_rle(W, H, &px).unwrap();
        assert_eq!(decode_rle(&mask), px);

        for p in 0..=2 {
            for q in 0..=2 {
                assert_eq!(moment(&mask, p, q), moment_oracle(&px, p, q));
            }
        }

        let largest = flood_fill_largest(&px, W as usize, H as usize);
        let comp = max_area_component(&mask).unwrap();
        assert_eq!(decode_rle(&comp), largest);

        match centroid(&mask) {
            Ok(c) => {
                let m00 = moment_oracle(&largest, 0, 0);
                assert_eq!(c.x, moment_oracle(&largest, 1, 0) / m00);
                assert_eq!(c.y, moment_oracle(&largest, 0, 1) / m00);
            }
            Err(_) => assert!(px.iter().all(|&b| !b)),
        }

        if let Some((prev_px, prev_mask)) = &prev {
            let inter = px.iter().zip(prev_px).filter(|(a, b)| **a && **b).count();
            let union = px.iter().zip(prev_px).filter(|(a, b)| **a || **b).count();
            let want = if union == 0 { 0.0 } else { inter as f64 / union as f64 };
            assert_eq!(mask_iou(&mask, prev_mask).unwrap(), want);
        }
        prev = Some((px, mask));
    }
}

#[test]
fn bbox_iou_equals_mask_iou_for_rectangles() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let mut rect = || {
            let (x0, y0) = (rng.random_range(0..40i64), rng.random_range(0..40i64));
            let (w, h) = (rng.random_range(1..24i64), rng.random_range(1..24i64));
            BinaryMask::from_row_spans(W, H, (y0..y0 + h).map(|y| (y, x0, x0 + w))).unwrap()
        };
        let (a, b) = (rect(), rect());
        let via_boxes = bbox_iou(&bbox_of(&a).unwrap(), &bbox_of(&b).unwrap());
        assert!((via_boxes - mask_iou(&a, &b).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn unit_square_boxes() {
    let a = BoundingBox::new(0.0, 0.0, 0.0, 0.0);
    let b = BoundingBox::new(0.5, 0.5, 0.5, 0.5);
    assert_eq!(bbox_iou(&a, &b), 0.25 / 1.75);
    assert_eq!(bbox_iou(&a, &a), 1.0);
}

fn pixels() -> impl Strategy<Value = (u32, u32, Vec<bool>)> {
    (1u32..24, 1u32..24).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<bool>(), (w * h) as usize).prop_map(move |px| (w, h, px))
    })
}

proptest! {
    #[test]
    fn rle_round_trip((w, h, px) in pixels()) {
        let m = encode_rle(w, h, &px).unwrap();
        prop_assert_eq!(m.runs().iter().map(|&r| r as u64).sum::<u64>(), (w * h) as u64);
        prop_assert!(m.runs().iter().skip(1).all(|&r| r > 0));
        prop_assert_eq!(decode_rle(&m), px.clone());
        prop_assert_eq!(m.area(), px.iter().filter(|&&b| b).count() as u64);
    }

    #[test]
    fn iou_symmetric_and_bounded((w, h, a) in pixels(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<bool> = (0..a.len()).map(|_| rng.random()).collect();
        let (ma, mb) = (encode_rle(w, h, &a).unwrap(), encode_rle(w, h, &b).unwrap());
        let ab = mask_iou(&ma, &mb).unwrap();
        prop_assert_eq!(ab, mask_iou(&mb, &ma).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        if !ma.is_empty() {
            prop_assert_eq!(mask_iou(&ma, &ma).unwrap(), 1.0);
        }
    }

    #[test]
    fn component_is_subset_with_max_area((w, h, px) in pixels()) {
        let m = encode_rle(w, h, &px).unwrap();
        prop_assume!(!m.is_empty());
        let c = max_area_component(&m).unwrap();
        prop_assert_eq!(c.intersection_area(&m).unwrap(), c.area());
        let largest = flood_fill_largest(&px, w as usize, h as usize);
        prop_assert_eq!(c.area(), largest.iter().filter(|&&b| b).count() as u64);
    }
}
