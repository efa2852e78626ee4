//! Per-view covisibility maps, morphological refinement and the scene score.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::camera::{CameraView, Pixel};
use crate::correspondence::CorrespondenceSet;
use crate::error::{Error, Result};

/// Default refinement kernel radius in pixels.
pub const DEFAULT_KERNEL_RADIUS: u32 = 1;

/// Per-pixel count of the other views holding a correspondence for the pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CovisMap {
    pub view_id: u32,
    pub width: u32,
    pub height: u32,
    pub n_views: u32,
    counts: Vec<u16>,
}

impl CovisMap {
    pub fn zeros(view_id: u32, width: u32, height: u32, n_views: u32) -> Self {
        Self {
            view_id,
            width,
            height,
            n_views,
            counts: vec![0; width as usize * height as usize],
        }
    }

    /// Builds a map from row-major counts, enforcing `count <= n_views - 1`.
    pub fn from_counts(view_id: u32, width: u32, height: u32, n_views: u32, counts: Vec<u16>) -> Result<Self> {
        if counts.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch {
                expected_w: width,
                expected_h: height,
                found_w: counts.len() as u32,
                found_h: 1,
            });
        }
        if n_views == 0 {
            return Err(Error::InvalidParameter("covisibility map needs n_views >= 1".into()));
        }
        let max = n_views - 1;
        if let Some(c) = counts.iter().find(|&&c| c as u32 > max) {
            return Err(Error::InvalidParameter(format!(
                "count {c} exceeds n_views - 1 = {max}"
            )));
        }
        Ok(Self { view_id, width, height, n_views, counts })
    }

    pub fn counts(&self) -> &[u16] {
        &self.counts
    }

    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.counts[y as usize * self.width as usize + x as usize]
    }

    pub fn max_count(&self) -> u16 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// Mean of `count / (n_views - 1)` over all pixels; zero for a single view.
    pub fn normalized_mean(&self) -> f64 {
        if self.n_views <= 1 || self.counts.is_empty() {
            return 0.0;
        }
        let sum: u64 = self.counts.iter().map(|&c| c as u64).sum();
        sum as f64 / (self.counts.len() as f64 * (self.n_views - 1) as f64)
    }
}

/// Counts, per pixel of `view`, the distinct destination views holding at
/// least one match with `conf >= min_conf`.
pub fn build_covis_map(
    view: &CameraView,
    sets: &[&CorrespondenceSet],
    n_views: u32,
    min_conf: f64,
) -> Result<CovisMap> {
    let (w, h) = (view.width as usize, view.height as usize);
    let dst_views: BTreeSet<u32> = sets.iter().map(|s| s.dst_view).collect();
    for s in sets {
        if s.src_view != view.view_id {
            return Err(Error::ViewIdMismatch { expected: view.view_id, found: s.src_view });
        }
        if s.dst_view == view.view_id {
            return Err(Error::ViewIdMismatch { expected: view.view_id, found: s.dst_view });
        }
    }
    if dst_views.len() as u32 >= n_views.max(1) {
        return Err(Error::InconsistentN(n_views, dst_views.len() as u32 + 1));
    }

    let mut counts = vec![0u16; w * h];
    let mut hit = vec![false; w * h];
    for dst in dst_views {
        hit.fill(false);
        for s in sets.iter().filter(|s| s.dst_view == dst) {
            for m in s.matches.iter().filter(|m| m.conf >= min_conf) {
                let (x, y) = m.src.floor_in(view.width, view.height).ok_or(Error::OutOfBoundsPixel {
                    view: view.view_id,
                    x: m.src.x,
                    y: m.src.y,
                    width: view.width,
                    height: view.height,
                })?;
                hit[y as usize * w + x as usize] = true;
            }
        }
        for (c, &hit) in counts.iter_mut().zip(&hit) {
            *c += hit as u16;
        }
    }
    CovisMap::from_counts(view.view_id, view.width, view.height, n_views, counts)
}

/// Level-wise morphological opening: every level set `{count >= t}` is
/// eroded then dilated with a `(2r+1)²` square, and the opened masks are
/// summed back into counts. Out-of-image pixels never constrain the window.
pub fn refine_covis_map(map: &CovisMap, kernel_radius: u32) -> CovisMap {
    if kernel_radius == 0 {
        return map.clone();
    }
    let (w, h) = (map.width as usize, map.height as usize);
    let r = kernel_radius as usize;
    let mut counts = vec![0u16; w * h];
    for level in 1..=map.max_count() {
        let mask: Vec<bool> = map.counts.iter().map(|&c| c >= level).collect();
        let opened = dilate(&erode(&mask, w, h, r), w, h, r);
        for (c, on) in counts.iter_mut().zip(opened) {
            *c += on as u16;
        }
    }
    CovisMap { counts, ..map.clone() }
}

// Square windows clipped to the image are rectangles, so min/max separate by axis.
fn window_pass(mask: &[bool], w: usize, h: usize, r: usize, horizontal: bool, all: bool) -> Vec<bool> {
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let (lo, hi, fixed) = if horizontal {
                (x.saturating_sub(r), (x + r).min(w - 1), y)
            } else {
                (y.saturating_sub(r), (y + r).min(h - 1), x)
            };
            let mut vals = (lo..=hi).map(|k| if horizontal { mask[fixed * w + k] } else { mask[k * w + fixed] });
            out[y * w + x] = if all { vals.all(|v| v) } else { vals.any(|v| v) };
        }
    }
    out
}

fn erode(mask: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    window_pass(&window_pass(mask, w, h, r, true, true), w, h, r, false, true)
}

fn dilate(mask: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    window_pass(&window_pass(mask, w, h, r, true, false), w, h, r, false, false)
}

/// Scene-level covisibility score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneCovisScore {
    #[serde(rename = "S")]
    pub score: f64,
    pub per_view_means: Vec<f64>,
}

pub fn scene_covis_score(maps: &[CovisMap]) -> Result<SceneCovisScore> {
    let first = maps.first().ok_or_else(|| Error::EmptyInput("no covisibility maps".into()))?;
    if let Some(m) = maps.iter().find(|m| m.n_views != first.n_views) {
        return Err(Error::InconsistentN(first.n_views, m.n_views));
    }
    let per_view_means: Vec<f64> = maps.iter().map(CovisMap::normalized_mean).collect();
    let score = per_view_means.iter().sum::<f64>() / per_view_means.len() as f64;
    Ok(SceneCovisScore { score, per_view_means })
}

/// Count at the pixel containing the continuous coordinate `pixel`.
pub fn covis_at(map: &CovisMap, pixel: Pixel) -> Result<u16> {
    let (x, y) = pixel.floor_in(map.width, map.height).ok_or(Error::OutOfBounds {
        x: pixel.x,
        y: pixel.y,
        width: map.width,
        height: map.height,
    })?;
    Ok(map.get(x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Intrinsics;
    use crate::correspondence::Match;
    use crate::Vec3;
    use nalgebra::Matrix3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn view(id: u32, w: u32, h: u32) -> CameraView {
        CameraView::new(id, Intrinsics::new(10.0, 10.0, w as f64 / 2.0, h as f64 / 2.0), Matrix3::identity(), Vec3::zeros(), w, h)
            .unwrap()
    }

    fn set(src: u32, dst: u32, pixels: &[(f64, f64)]) -> CorrespondenceSet {
        CorrespondenceSet {
            src_view: src,
            dst_view: dst,
            matches: pixels
                .iter()
                .map(|&(x, y)| Match { src: Pixel::new(x, y), dst: Pixel::new(0.5, 0.5), conf: 1.0 })
                .collect(),
        }
    }

    #[test]
    fn pixel_matched_into_both_other_views_counts_two() {
        let v = view(0, 4, 4);
        let a = set(0, 1, &[(1.5, 1.5), (2.5, 0.5)]);
        let b = set(0, 2, &[(1.2, 1.7)]);
        let map = build_covis_map(&v, &[&a, &b], 3, 0.0).unwrap();
        assert_eq!(map.get(1, 1), 2);
        assert_eq!(map.get(2, 0), 1);
        assert_eq!(map.get(3, 3), 0);
    }

    #[test]
    fn no_sets_gives_zero_map() {
        let map = build_covis_map(&view(0, 5, 3), &[], 3, 0.0).unwrap();
        assert!(map.counts().iter().all(|&c| c == 0));
    }

    #[test]
    fn repeated_destination_counts_once() {
        let v = view(0, 4, 4);
        let a = set(0, 1, &[(1.5, 1.5), (1.9, 1.1)]);
        let b = set(0, 1, &[(1.5, 1.5)]);
        let map = build_covis_map(&v, &[&a, &b], 3, 0.0).unwrap();
        assert_eq!(map.get(1, 1), 1);
    }

    #[test]
    fn confidence_threshold_filters_matches() {
        let v = view(0, 4, 4);
        let mut a = set(0, 1, &[(1.5, 1.5), (2.5, 2.5)]);
        a.matches[0].conf = 0.2;
        let map = build_covis_map(&v, &[&a], 2, 0.5).unwrap();
        assert_eq!((map.get(1, 1), map.get(2, 2)), (0, 1));
    }

    #[test]
    fn mismatched_source_view_errors() {
        let a = set(3, 1, &[(1.5, 1.5)]);
        assert!(matches!(
            build_covis_map(&view(0, 4, 4), &[&a], 3, 0.0),
            Err(Error::ViewIdMismatch { expected: 0, found: 3 })
        ));
    }

    #[test]
    fn random_matches_equal_brute_force_recount() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (w, h, n) = (23u32, 17u32, 6u32);
        let v = view(2, w, h);
        let sets: Vec<CorrespondenceSet> = [0u32, 1, 3, 4, 5, 1]
            .iter()
            .map(|&dst| {
                let pixels: Vec<(f64, f64)> = (0..rng.random_range(0..200))
                    .map(|_| (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64)))
                    .collect();
                set(2, dst, &pixels)
            })
            .collect();
        let refs: Vec<&CorrespondenceSet> = sets.iter().collect();
        let map = build_covis_map(&v, &refs, n, 0.0).unwrap();
        for y in 0..h {
            for x in 0..w {
                let mut dsts = Vec::new();
                for s in &sets {
                    for m in &s.matches {
                        if m.src.x.floor() as u32 == x && m.src.y.floor() as u32 == y && !dsts.contains(&s.dst_view) {
                            dsts.push(s.dst_view);
                        }
                    }
                }
                assert_eq!(map.get(x, y) as usize, dsts.len());
            }
        }
    }

    #[test]
    fn radius_zero_is_identity() {
        let map = CovisMap::from_counts(0, 3, 2, 4, vec![0, 3, 1, 2, 0, 1]).unwrap();
        assert_eq!(refine_covis_map(&map, 0), map);
    }

    #[test]
    fn isolated_pixel_is_removed() {
        let mut counts = vec![0u16; 25];
        counts[12] = 1;
        let map = CovisMap::from_counts(0, 5, 5, 3, counts).unwrap();
        assert_eq!(refine_covis_map(&map, 1).max_count(), 0);
    }

    #[test]
    fn saturated_map_survives_refinement() {
        let map = CovisMap::from_counts(0, 6, 4, 3, vec![2; 24]).unwrap();
        assert_eq!(refine_covis_map(&map, 2), map);
    }

    #[test]
    fn opening_keeps_large_blocks() {
        // A 4x4 block of count 2 inside a 10x10 zero field survives a radius-1 opening.
        let mut counts = vec![0u16; 100];
        for y in 3..7 {
            for x in 3..7 {
                counts[y * 10 + x] = 2;
            }
        }
        let map = CovisMap::from_counts(0, 10, 10, 3, counts).unwrap();
        assert_eq!(refine_covis_map(&map, 1), map);
    }

    #[test]
    fn score_hand_arithmetic() {
        let a = CovisMap::from_counts(0, 2, 2, 3, vec![2, 2, 0, 0]).unwrap();
        let b = CovisMap::from_counts(1, 2, 2, 3, vec![1, 1, 1, 1]).unwrap();
        let s = scene_covis_score(&[a, b]).unwrap();
        assert_eq!(s.per_view_means, vec![0.5, 0.5]);
        assert_eq!(s.score, 0.5);
    }

    #[test]
    fn score_saturation_and_zero() {
        let full = CovisMap::from_counts(0, 3, 3, 4, vec![3; 9]).unwrap();
        assert_eq!(scene_covis_score(&[full.clone(), full]).unwrap().score, 1.0);
        let zero = CovisMap::zeros(0, 3, 3, 4);
        assert_eq!(scene_covis_score(&[zero]).unwrap().score, 0.0);
    }

    #[test]
    fn score_errors() {
        assert!(matches!(scene_covis_score(&[]), Err(Error::EmptyInput(_))));
        let a = CovisMap::zeros(0, 2, 2, 3);
        let b = CovisMap::zeros(1, 2, 2, 4);
        assert!(matches!(scene_covis_score(&[a, b]), Err(Error::InconsistentN(3, 4))));
    }

    #[test]
    fn covis_at_floors_and_bounds() {
        let map = CovisMap::from_counts(0, 2, 2, 3, vec![2, 0, 1, 1]).unwrap();
        assert_eq!(covis_at(&map, Pixel::new(0.9, 0.9)).unwrap(), 2);
        assert_eq!(covis_at(&map, Pixel::new(0.0, 1.0)).unwrap(), 1);
        assert!(matches!(covis_at(&map, Pixel::new(2.0, 0.0)), Err(Error::OutOfBounds { .. })));
        assert!(matches!(covis_at(&map, Pixel::new(-0.1, 0.0)), Err(Error::OutOfBounds { .. })));
    }

    fn arb_map() -> impl Strategy<Value = CovisMap> {
        (1u32..12, 1u32..12, 2u32..6).prop_flat_map(|(w, h, n)| {
            prop::collection::vec(0u16..n as u16, (w * h) as usize)
                .prop_map(move |counts| CovisMap::from_counts(0, w, h, n, counts).unwrap())
        })
    }

    proptest! {
        #[test]
        fn refinement_is_bounded_and_nested(map in arb_map(), r in 0u32..3) {
            let refined = refine_covis_map(&map, r);
            prop_assert!(refined.max_count() <= map.max_count());
            // Opening is anti-extensive per level, so counts never grow.
            for (a, b) in refined.counts().iter().zip(map.counts()) {
                prop_assert!(a <= b);
            }
            for t in 1..=map.max_count() {
                let upper: Vec<bool> = refined.counts().iter().map(|&c| c >= t + 1).collect();
                let lower: Vec<bool> = refined.counts().iter().map(|&c| c >= t).collect();
                for (u, l) in upper.iter().zip(&lower) {
                    prop_assert!(!u || *l);
                }
            }
            // Opening is idempotent.
            prop_assert_eq!(refine_covis_map(&refined, r), refined);
        }

        #[test]
        fn score_is_permutation_invariant(maps in prop::collection::vec(
            prop::collection::vec(0u16..4, 6), 1..6), rot in 0usize..6) {
            let maps: Vec<CovisMap> = maps
                .into_iter()
                .enumerate()
                .map(|(i, c)| CovisMap::from_counts(i as u32, 3, 2, 4, c).unwrap())
                .collect();
            let s = scene_covis_score(&maps).unwrap();
            let mut rotated = maps.clone();
            rotated.rotate_left(rot % maps.len());
            rotated.reverse();
            let s2 = scene_covis_score(&rotated).unwrap();
            let mean = s.per_view_means.iter().sum::<f64>() / s.per_view_means.len() as f64;
            prop_assert!((s.score - mean).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&s.score));
            prop_assert!((s.score - s2.score).abs() <= 1e-15);
        }
    }
}
