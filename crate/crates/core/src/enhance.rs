//! Initial point-cloud enhancement: triangulated densification of the COLMAP
//! cloud, covisibility split, per-view monocular depth alignment and
//! assembly of `P_final`.

use std::collections::{BTreeMap, HashMap, HashSet};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{self, CameraView, Pixel, DEFAULT_GATE_PX};
use crate::cloud::{Point, PointCloud, Source};
use crate::covis::{build_covis_map, CovisMap};
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::scene::SceneBundle;
use crate::spatial::{KdTree, RadiusGrid};
use crate::Vec3;

/// Minimum number of depth/geometry pairs [`fit_scale`] accepts.
pub const MIN_SCALE_PAIRS: usize = 10;
/// Default mono unprojection stride in pixels.
pub const DEFAULT_STRIDE: u32 = 4;

/// Jointly triangulates every matched source pixel.
///
/// Source views are visited in ascending id and their pixels in row-major
/// order. A pixel already consumed by an accepted triangulation is skipped
/// as a source and dropped as an observation. Rejected pixels stay free.
pub fn triangulate_corrs(bundle: &SceneBundle, gate_px: f64) -> Result<PointCloud> {
    if bundle.views.len() < 2 || bundle.correspondences.iter().all(|s| s.is_empty()) {
        return Err(Error::NoCorrespondences);
    }
    let mut consumed: HashSet<(u32, u32, u32)> = HashSet::new();
    let mut out = PointCloud::default();
    for view in &bundle.views {
        // (x, y) -> source coordinate plus one destination observation per view.
        let mut by_pixel: BTreeMap<(u32, u32), (Pixel, Vec<(u32, Pixel)>)> = BTreeMap::new();
        for set in bundle.correspondences_from(view.view_id) {
            for m in &set.matches {
                let Some((x, y)) = m.src.floor_in(view.width, view.height) else {
                    continue;
                };
                let entry = by_pixel.entry((y, x)).or_insert_with(|| (m.src, Vec::new()));
                if !entry.1.iter().any(|(j, _)| *j == set.dst_view) {
                    entry.1.push((set.dst_view, m.dst));
                }
            }
        }
        for (&(y, x), (src, dsts)) in &by_pixel {
            if consumed.contains(&(view.view_id, x, y)) {
                continue;
            }
            let mut obs: Vec<(&CameraView, Pixel)> = vec![(view, *src)];
            let mut keys = vec![(view.view_id, x, y)];
            for &(j, px) in dsts {
                let dst_view = bundle.view(j)?;
                let Some((dx, dy)) = px.floor_in(dst_view.width, dst_view.height) else {
                    continue;
                };
                if !consumed.contains(&(j, dx, dy)) {
                    obs.push((dst_view, px));
                    keys.push((j, dx, dy));
                }
            }
            if obs.len() < 2 {
                continue;
            }
            match camera::triangulate(&obs, gate_px) {
                Ok(Some(t)) => {
                    consumed.extend(keys);
                    out.points.push(Point::new(t.point, Source::Triangulated).with_origin(view.view_id, (x, y)));
                }
                Ok(None) | Err(Error::DegenerateGeometry) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

/// Half the median nearest-neighbor spacing of `cloud`; zero with fewer than two points.
pub fn default_epsilon(cloud: &PointCloud) -> f64 {
    let tree = KdTree::new(cloud.positions());
    let mut spacing: Vec<f64> = (0..tree.len()).filter_map(|i| tree.nearest_other(i).map(|(_, d)| d)).collect();
    if spacing.is_empty() {
        return 0.0;
    }
    spacing.sort_by(f64::total_cmp);
    let n = spacing.len();
    let median = if n % 2 == 1 { spacing[n / 2] } else { 0.5 * (spacing[n / 2 - 1] + spacing[n / 2]) };
    0.5 * median
}

/// `P_C` plus every triangulated point farther than `epsilon` (strictly)
/// from its nearest `P_C` point.
pub fn merge_clouds(p_c: &PointCloud, p_t: &PointCloud, epsilon: f64) -> Result<PointCloud> {
    if p_c.is_empty() {
        return Err(Error::EmptyBase);
    }
    let tree = KdTree::new(p_c.positions());
    let mut out = p_c.clone();
    out.points.extend(
        p_t.points
            .iter()
            .filter(|p| tree.nearest(&p.position).is_some_and(|(_, d)| d > epsilon))
            .cloned(),
    );
    Ok(out)
}

fn check_alignment(views: &[CameraView], maps: &[CovisMap]) -> Result<()> {
    if views.len() != maps.len() {
        return Err(Error::MapViewMismatch(format!("{} views but {} maps", views.len(), maps.len())));
    }
    for (v, m) in views.iter().zip(maps) {
        if v.view_id != m.view_id || (v.width, v.height) != (m.width, m.height) {
            return Err(Error::MapViewMismatch(format!(
                "view {} ({}x{}) paired with map {} ({}x{})",
                v.view_id, v.width, v.height, m.view_id, m.width, m.height
            )));
        }
    }
    Ok(())
}

/// Splits `cloud` into points landing on a covisible pixel (count ≥ 1) of
/// at least one view, and the rest.
pub fn split_by_covis(cloud: &PointCloud, views: &[CameraView], maps: &[CovisMap]) -> Result<(PointCloud, PointCloud)> {
    check_alignment(views, maps)?;
    let is_low: Vec<bool> = cloud
        .points
        .par_iter()
        .map(|p| {
            views.iter().zip(maps).any(|(v, m)| {
                v.project(&p.position)
                    .and_then(|proj| proj.pixel.floor_in(v.width, v.height))
                    .is_some_and(|(x, y)| m.get(x, y) >= 1)
            })
        })
        .collect();
    let (mut low, mut high) = (PointCloud::default(), PointCloud::default());
    for (p, low_side) in cloud.points.iter().zip(is_low) {
        if low_side { &mut low } else { &mut high }.points.push(p.clone());
    }
    Ok((low, high))
}

/// Unprojects every valid depth pixel on the `stride` grid into the camera
/// frame of `view`, split by the pixel's covisibility count (≥ 1 vs 0).
/// Points carry their view id and pixel.
pub fn unproject_depth(
    view: &CameraView,
    depth: &DepthMap,
    map: &CovisMap,
    stride: u32,
) -> Result<(PointCloud, PointCloud)> {
    for (w, h) in [(depth.width, depth.height), (map.width, map.height)] {
        if (w, h) != (view.width, view.height) {
            return Err(Error::DimensionMismatch {
                expected_w: view.width,
                expected_h: view.height,
                found_w: w,
                found_h: h,
            });
        }
    }
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be at least 1".into()));
    }
    let (mut low, mut high) = (PointCloud::default(), PointCloud::default());
    for y in (0..view.height).step_by(stride as usize) {
        for x in (0..view.width).step_by(stride as usize) {
            let Some(d) = depth.depth(x, y) else { continue };
            let pc = view.unproject_camera(Pixel::center_of(x, y), d)?;
            let point = Point::new(pc, Source::Mono).with_origin(view.view_id, (x, y));
            if map.get(x, y) >= 1 { &mut low } else { &mut high }.points.push(point);
        }
    }
    Ok((low, high))
}

/// Quality of a [`ScaleTransform`] fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub pairs: usize,
    /// RMS residual norm over inliers, meters.
    pub rms: f64,
    pub inlier_fraction: f64,
}

/// Per-axis affine map `diag(scale) · p + offset` in the camera frame of `frame_view`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleTransform {
    pub scale: Vec3,
    pub offset: Vec3,
    pub frame_view: u32,
    pub fit_stats: FitStats,
}

impl ScaleTransform {
    pub fn identity(frame_view: u32) -> Self {
        Self {
            scale: Vec3::repeat(1.0),
            offset: Vec3::zeros(),
            frame_view,
            fit_stats: FitStats { pairs: 0, rms: 0.0, inlier_fraction: 1.0 },
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.scale.component_mul(p) + self.offset
    }
}

/// Pairs each geometry point with the depth point unprojected at the pixel it
/// projects to in `view`. When several geometry points share a pixel the
/// nearest one (smallest depth) is kept, as it is the visible surface.
fn pair_by_pixel(p_d_low: &PointCloud, p_u_low: &PointCloud, view: &CameraView) -> Vec<(Vec3, Vec3)> {
    let depth_at: HashMap<(u32, u32), Vec3> = p_d_low
        .points
        .iter()
        .filter_map(|p| p.origin_pixel.map(|px| (px, p.position)))
        .collect();
    let mut targets: BTreeMap<(u32, u32), Vec3> = BTreeMap::new();
    for p in &p_u_low.points {
        let pc = view.world_to_camera(&p.position);
        let Some(proj) = view.project_camera_point(&pc) else { continue };
        let Some((x, y)) = proj.pixel.floor_in(view.width, view.height) else { continue };
        if !depth_at.contains_key(&(x, y)) {
            continue;
        }
        targets
            .entry((y, x))
            .and_modify(|t| {
                if pc.z < t.z {
                    *t = pc
                }
            })
            .or_insert(pc);
    }
    targets.into_iter().map(|((y, x), t)| (depth_at[&(x, y)], t)).collect()
}

// Relative spread below which an axis cannot support an offset term.
const DEGENERATE_SPREAD: f64 = 1e-9;

/// Least squares `y ≈ s·x + t` (or `y ≈ s·x` without offset).
fn fit_axis(xs: &[f64], ys: &[f64], with_offset: bool) -> (f64, f64) {
    let n = xs.len() as f64;
    let no_offset = || {
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        (if sxx > 0.0 { sxy / sxx } else { 0.0 }, 0.0)
    };
    if !with_offset {
        return no_offset();
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let vxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let vxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let scale_ref = xs.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    if vxx <= DEGENERATE_SPREAD * scale_ref {
        // Constant input on this axis (e.g. a fronto-parallel wall in z):
        // slope and offset are not separable, so fit a pure scale.
        return no_offset();
    }
    let s = vxy / vxx;
    (s, my - s * mx)
}

fn fit_pairs(pairs: &[(Vec3, Vec3)], with_offset: bool) -> (Vec3, Vec3) {
    let mut scale = Vec3::zeros();
    let mut offset = Vec3::zeros();
    for axis in 0..3 {
        let xs: Vec<f64> = pairs.iter().map(|(d, _)| d[axis]).collect();
        let ys: Vec<f64> = pairs.iter().map(|(_, u)| u[axis]).collect();
        let (s, t) = fit_axis(&xs, &ys, with_offset);
        scale[axis] = s;
        offset[axis] = t;
    }
    (scale, offset)
}

fn residuals(pairs: &[(Vec3, Vec3)], scale: &Vec3, offset: &Vec3) -> Vec<f64> {
    pairs.iter().map(|(d, u)| (scale.component_mul(d) + offset - u).norm()).collect()
}

fn rms(r: &[f64]) -> f64 {
    (r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64).sqrt()
}

/// Fits the per-axis transform mapping depth-unprojected points onto the
/// covisible geometry, in the camera frame of `view`.
///
/// Pairs are formed by pixel (see [`pair_by_pixel`]). After the first fit,
/// pairs whose residual exceeds 3σ (σ the RMS residual) are discarded once
/// and the fit is repeated.
pub fn fit_scale(p_d_low: &PointCloud, p_u_low: &PointCloud, view: &CameraView, with_offset: bool) -> Result<ScaleTransform> {
    if let Some(p) = p_d_low.points.iter().find(|p| p.origin_view.is_some_and(|v| v != view.view_id)) {
        return Err(Error::FrameMismatch { expected: view.view_id, found: p.origin_view.unwrap_or(0) });
    }
    let pairs = pair_by_pixel(p_d_low, p_u_low, view);
    if pairs.len() < MIN_SCALE_PAIRS {
        return Err(Error::InsufficientPairs { found: pairs.len(), required: MIN_SCALE_PAIRS });
    }
    let (scale, offset) = fit_pairs(&pairs, with_offset);
    let r = residuals(&pairs, &scale, &offset);
    let sigma = rms(&r);
    let inliers: Vec<(Vec3, Vec3)> = pairs.iter().zip(&r).filter(|(_, &e)| e <= 3.0 * sigma).map(|(p, _)| *p).collect();
    let (scale, offset, inliers) = if inliers.len() == pairs.len() {
        (scale, offset, pairs.clone())
    } else {
        if inliers.len() < MIN_SCALE_PAIRS {
            return Err(Error::InsufficientPairs { found: inliers.len(), required: MIN_SCALE_PAIRS });
        }
        let (s, t) = fit_pairs(&inliers, with_offset);
        (s, t, inliers)
    };
    if scale.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::NonPositiveScale([scale.x, scale.y, scale.z]));
    }
    let fit_stats = FitStats {
        pairs: pairs.len(),
        rms: rms(&residuals(&inliers, &scale, &offset)),
        inlier_fraction: inliers.len() as f64 / pairs.len() as f64,
    };
    Ok(ScaleTransform { scale, offset, frame_view: view.view_id, fit_stats })
}

/// Maps camera-frame mono points through `t` and then into world coordinates.
pub fn apply_scale(t: &ScaleTransform, p_d_high: &PointCloud, view: &CameraView) -> Result<PointCloud> {
    if t.frame_view != view.view_id {
        return Err(Error::FrameMismatch { expected: view.view_id, found: t.frame_view });
    }
    if let Some(v) = p_d_high.points.iter().filter_map(|p| p.origin_view).find(|&v| v != view.view_id) {
        return Err(Error::FrameMismatch { expected: view.view_id, found: v });
    }
    Ok(p_d_high
        .points
        .iter()
        .map(|p| Point {
            position: view.camera_to_world(&t.apply(&p.position)),
            source: Source::Mono,
            ..p.clone()
        })
        .collect())
}

/// `P_u^low` followed by the mono clouds in the given order, dropping each
/// mono point that lies strictly closer than `dedup_radius` to a point
/// already accepted. A radius of zero keeps everything.
pub fn assemble_final(p_u_low: &PointCloud, p_s_high_per_view: &[PointCloud], dedup_radius: f64) -> PointCloud {
    let mut out = p_u_low.clone();
    if !(dedup_radius > 0.0) {
        for c in p_s_high_per_view {
            out.points.extend(c.points.iter().cloned());
        }
        return out;
    }
    let mut grid = RadiusGrid::new(dedup_radius);
    for p in &p_u_low.points {
        grid.insert(p.position);
    }
    for p in p_s_high_per_view.iter().flat_map(|c| &c.points) {
        if !grid.has_within(&p.position) {
            grid.insert(p.position);
            out.points.push(p.clone());
        }
    }
    out
}

/// Parameters of the full enhancement pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceParams {
    pub gate_px: f64,
    /// Merge distance for adding triangulated points; `None` derives it from the COLMAP spacing.
    pub epsilon: Option<f64>,
    /// Mono dedup radius; `None` reuses epsilon.
    pub dedup_radius: Option<f64>,
    pub stride: u32,
    pub min_conf: f64,
    pub fit_offset: bool,
}

impl Default for EnhanceParams {
    fn default() -> Self {
        Self {
            gate_px: DEFAULT_GATE_PX,
            epsilon: None,
            dedup_radius: None,
            stride: DEFAULT_STRIDE,
            min_conf: 0.0,
            fit_offset: true,
        }
    }
}

/// Outcome of the mono stage for one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewScaleReport {
    pub view_id: u32,
    pub depth_low: usize,
    pub depth_high: usize,
    pub transform: Option<ScaleTransform>,
    pub scaled_points: usize,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceStats {
    pub epsilon: f64,
    pub dedup_radius: f64,
    pub colmap: usize,
    pub triangulated: usize,
    pub merged: usize,
    pub merged_low: usize,
    pub merged_high: usize,
    pub final_points: usize,
    pub final_mono: usize,
    pub views: Vec<ViewScaleReport>,
}

#[derive(Debug, Clone)]
pub struct EnhanceOutput {
    pub p_t: PointCloud,
    pub p_u: PointCloud,
    pub p_u_low: PointCloud,
    /// Scaled mono clouds in ascending view id, one per view with depth.
    pub p_s_high: Vec<(u32, PointCloud)>,
    pub p_final: PointCloud,
    /// Unrefined maps used for the split, aligned with `bundle.views`.
    pub maps: Vec<CovisMap>,
    pub stats: EnhanceStats,
}

/// Unrefined covisibility maps of every view, aligned with `bundle.views`.
pub fn build_scene_maps(bundle: &SceneBundle, min_conf: f64) -> Result<Vec<CovisMap>> {
    let n = bundle.n_views();
    bundle
        .views
        .par_iter()
        .map(|v| build_covis_map(v, &bundle.correspondences_from(v.view_id), n, min_conf))
        .collect()
}

/// Runs the whole enhancement stage on a loaded scene.
pub fn enhance(bundle: &SceneBundle, params: &EnhanceParams) -> Result<EnhanceOutput> {
    if !(params.gate_px > 0.0) {
        return Err(Error::InvalidParameter(format!("gate_px must be positive, got {}", params.gate_px)));
    }
    let maps = build_scene_maps(bundle, params.min_conf)?;
    let p_t = match triangulate_corrs(bundle, params.gate_px) {
        Ok(c) => c,
        Err(Error::NoCorrespondences) => {
            warn!("event=no_correspondences triangulated=0");
            PointCloud::default()
        }
        Err(e) => return Err(e),
    };
    let epsilon = params.epsilon.unwrap_or_else(|| default_epsilon(&bundle.colmap_points));
    let dedup_radius = params.dedup_radius.unwrap_or(epsilon);
    let p_u = merge_clouds(&bundle.colmap_points, &p_t, epsilon)?;
    let (p_u_low, p_u_high) = split_by_covis(&p_u, &bundle.views, &maps)?;
    info!(
        "stage=merge colmap={} triangulated={} merged={} low={} high={} epsilon={epsilon}",
        bundle.colmap_points.len(),
        p_t.len(),
        p_u.len(),
        p_u_low.len(),
        p_u_high.len()
    );
    if bundle.depth_maps.is_empty() {
        warn!("event=no_depth_maps mono_points=0");
    }

    let per_view: Vec<Result<(ViewScaleReport, Option<PointCloud>)>> = bundle
        .views
        .par_iter()
        .zip(&maps)
        .filter_map(|(view, map)| bundle.depth_maps.get(&view.view_id).map(|d| (view, map, d)))
        .map(|(view, map, depth)| {
            let (d_low, d_high) = unproject_depth(view, depth, map, params.stride)?;
            let mut report = ViewScaleReport {
                view_id: view.view_id,
                depth_low: d_low.len(),
                depth_high: d_high.len(),
                transform: None,
                scaled_points: 0,
                skipped: None,
            };
            match fit_scale(&d_low, &p_u_low, view, params.fit_offset) {
                Ok(t) => {
                    let scaled = apply_scale(&t, &d_high, view)?;
                    report.scaled_points = scaled.len();
                    report.transform = Some(t);
                    Ok((report, Some(scaled)))
                }
                Err(e @ Error::InsufficientPairs { .. }) => {
                    warn!("event=scale_fit_skipped view={} reason=\"{e}\"", view.view_id);
                    report.skipped = Some(e.to_string());
                    Ok((report, None))
                }
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut reports = Vec::new();
    let mut p_s_high = Vec::new();
    for r in per_view {
        let (report, scaled) = r?;
        if let Some(c) = scaled {
            p_s_high.push((report.view_id, c));
        }
        reports.push(report);
    }
    let mono: Vec<PointCloud> = p_s_high.iter().map(|(_, c)| c.clone()).collect();
    let p_final = assemble_final(&p_u_low, &mono, dedup_radius);
    let stats = EnhanceStats {
        epsilon,
        dedup_radius,
        colmap: bundle.colmap_points.len(),
        triangulated: p_t.len(),
        merged: p_u.len(),
        merged_low: p_u_low.len(),
        merged_high: p_u_high.len(),
        final_points: p_final.len(),
        final_mono: p_final.count_source(Source::Mono),
        views: reports,
    };
    info!("stage=assemble final={} mono={}", stats.final_points, stats.final_mono);
    Ok(EnhanceOutput { p_t, p_u, p_u_low, p_s_high, p_final, maps, stats })
}
