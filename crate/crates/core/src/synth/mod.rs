//! Fully ground-truthed synthetic scenes and brute-force reference
//! implementations used as test oracles.
//!
//! A scene is described by a JSON [`SceneSpec`]:
//!
//! ```json
//! {
//!   "resolution": [64, 48],
//!   "fov_deg": 60.0,
//!   "seed": 7,
//!   "surfaces": [
//!     {"type": "sphere", "center": [0, 0, 0], "radius": 1.0, "color": [200, 80, 60]},
//!     {"type": "plane", "point": [0, 0, 3], "normal": [0, 0, -1], "color": [90, 90, 90]},
//!     {"type": "box", "min": [-1, -1, 2], "max": [1, 1, 2.1], "color": [20, 160, 20]}
//!   ],
//!   "rig": {"type": "outward_360", "views": 6, "radius": 4.0},
//!   "colmap_points": 200,
//!   "depth_scales": [1.0, 0.8],
//!   "depth_noise": 0.0,
//!   "match_noise_px": 0.0,
//!   "match_dropout": 0.0
//! }
//! ```
//!
//! Cameras follow the COLMAP convention (x right, y down, z forward), so
//! world "up" defaults to `-y`.

pub mod primitives;

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use primitives::{cast, distance_to_surfaces, Primitive};

use crate::camera::{CameraView, Intrinsics, Pixel};
use crate::cloud::{Point, PointCloud, Source};
use crate::correspondence::{CorrespondenceSet, Match};
use crate::covis::CovisMap;
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::scene::{depth_file_name, write_scene, SceneBundle};
use crate::Vec3;

/// Depth agreement tolerance for the occlusion test, meters.
pub const OCCLUSION_TOL: f64 = 1e-6;
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const GT_DEPTH_DIR: &str = "gt_depth";

fn default_up() -> [f64; 3] {
    [0.0, -1.0, 0.0]
}

fn default_fov() -> f64 {
    60.0
}

fn default_colmap_points() -> usize {
    200
}

fn default_true() -> bool {
    true
}

/// Explicit camera placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub eye: [f64; 3],
    pub target: [f64; 3],
    #[serde(default = "default_up")]
    pub up: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RigSpec {
    /// `views` cameras spaced `baseline` apart along world x, centered on the
    /// origin. They look along +z, or at `target` when given.
    ForwardFacing {
        views: u32,
        baseline: f64,
        #[serde(default)]
        target: Option<[f64; 3]>,
    },
    /// `views` cameras evenly spaced on a horizontal circle of `radius`
    /// around `target` at `height` along y, each looking at `target`.
    #[serde(rename = "outward_360")]
    Outward360 {
        views: u32,
        radius: f64,
        #[serde(default)]
        height: f64,
        #[serde(default)]
        target: [f64; 3],
    },
    Explicit { cameras: Vec<CameraSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    /// Image `[width, height]` in pixels.
    pub resolution: [u32; 2],
    /// Horizontal field of view, degrees.
    #[serde(default = "default_fov")]
    pub fov_deg: f64,
    #[serde(default)]
    pub seed: u64,
    pub surfaces: Vec<Primitive>,
    pub rig: RigSpec,
    /// Number of COLMAP points sampled from multi-view surface points.
    #[serde(default = "default_colmap_points")]
    pub colmap_points: usize,
    /// Whether to write depth maps.
    #[serde(default = "default_true")]
    pub depth: bool,
    /// Multiplicative scale of each view's depth map, cycled over views.
    #[serde(default)]
    pub depth_scales: Vec<f64>,
    /// Standard deviation of multiplicative depth noise.
    #[serde(default)]
    pub depth_noise: f64,
    #[serde(default)]
    pub match_noise_px: f64,
    #[serde(default)]
    pub match_dropout: f64,
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::DegenerateSpec(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::DegenerateSpec(m));
        let [w, h] = self.resolution;
        if w == 0 || h == 0 {
            return bad("resolution must be positive".into());
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return bad(format!("fov_deg must lie in (0, 180), got {}", self.fov_deg));
        }
        if self.surfaces.is_empty() {
            return bad("scene has no surfaces".into());
        }
        for (i, s) in self.surfaces.iter().enumerate() {
            s.validate().map_err(|m| Error::DegenerateSpec(format!("surface {i}: {m}")))?;
        }
        if self.depth_scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return bad("depth scales must be positive".into());
        }
        if !(self.depth_noise >= 0.0) || !(self.match_noise_px >= 0.0) {
            return bad("noise levels must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.match_dropout) {
            return bad("match_dropout must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Intrinsics {
        let [w, h] = self.resolution;
        let f = 0.5 * w as f64 / (0.5 * self.fov_deg.to_radians()).tan();
        Intrinsics::new(f, f, 0.5 * w as f64, 0.5 * h as f64)
    }

    /// The cameras of the rig, with ids `0..n`.
    pub fn views(&self) -> Result<Vec<CameraView>> {
        let [w, h] = self.resolution;
        let k = self.intrinsics();
        let up = Vec3::new(0.0, -1.0, 0.0);
        let place = |(i, (eye, target, up)): (usize, (Vec3, Vec3, Vec3))| {
            CameraView::look_at(i as u32, k, eye, target, up, w, h).map_err(|e| Error::DegenerateSpec(e.to_string()))
        };
        let poses: Vec<(Vec3, Vec3, Vec3)> = match &self.rig {
            RigSpec::ForwardFacing { views, baseline, target } => (0..*views)
                .map(|i| {
                    let x = (i as f64 - (*views as f64 - 1.0) / 2.0) * baseline;
                    let eye = Vec3::new(x, 0.0, 0.0);
                    let tgt = target.map_or(eye + Vec3::z(), |t| Vec3::from(t));
                    (eye, tgt, up)
                })
                .collect(),
            RigSpec::Outward360 { views, radius, height, target } => (0..*views)
                .map(|i| {
                    let theta = std::f64::consts::TAU * i as f64 / *views as f64;
                    let t = Vec3::from(*target);
                    (t + Vec3::new(radius * theta.sin(), *height, -radius * theta.cos()), t, up)
                })
                .collect(),
            RigSpec::Explicit { cameras } => {
                cameras.iter().map(|c| (Vec3::from(c.eye), Vec3::from(c.target), Vec3::from(c.up))).collect()
            }
        };
        if poses.is_empty() {
            return Err(Error::DegenerateSpec("rig has no cameras".into()));
        }
        poses.into_iter().enumerate().map(place).collect()
    }

    fn depth_scale(&self, view_index: usize) -> f64 {
        if self.depth_scales.is_empty() {
            1.0
        } else {
            self.depth_scales[view_index % self.depth_scales.len()]
        }
    }
}

/// Ground-truth surface hit at a pixel center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Camera-frame depth, meters.
    pub depth: f64,
    pub point: Vec3,
    pub surface: usize,
}

/// Ray-cast hits of one view, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewTruth {
    pub width: u32,
    pub height: u32,
    pub hits: Vec<Option<Hit>>,
}

impl ViewTruth {
    pub fn hit(&self, x: u32, y: u32) -> Option<Hit> {
        self.hits[y as usize * self.width as usize + x as usize]
    }

    /// Exact depths with `-1` where the ray escapes.
    pub fn depth_map(&self) -> DepthMap {
        let values = self.hits.iter().map(|h| h.map_or(-1.0, |h| h.depth as f32)).collect();
        DepthMap::new(self.width, self.height, values).expect("sized")
    }
}

/// Camera-frame depth of the first surface along the ray through `pixel`.
/// The ray direction has unit z in the camera frame, so the ray parameter
/// is the depth itself.
pub fn cast_pixel(primitives: &[Primitive], view: &CameraView, pixel: Pixel) -> Option<Hit> {
    let k = view.intrinsics;
    let dir_cam = Vec3::new((pixel.x - k.cx) / k.fx, (pixel.y - k.cy) / k.fy, 1.0);
    let dir = view.rotation().transpose() * dir_cam;
    let origin = view.center();
    cast(primitives, &origin, &dir).map(|(t, surface)| Hit { depth: t, point: origin + dir * t, surface })
}

pub fn render_truth(primitives: &[Primitive], view: &CameraView) -> ViewTruth {
    let hits = (0..view.height)
        .flat_map(|y| (0..view.width).map(move |x| (x, y)))
        .map(|(x, y)| cast_pixel(primitives, view, Pixel::center_of(x, y)))
        .collect();
    ViewTruth { width: view.width, height: view.height, hits }
}

/// True when `p` projects into `view` and is the first surface hit along that ray.
pub fn visible_in(primitives: &[Primitive], view: &CameraView, p: &Vec3) -> bool {
    let Some(proj) = view.project(p) else { return false };
    cast_pixel(primitives, view, proj.pixel).is_some_and(|h| (h.depth - proj.depth).abs() <= OCCLUSION_TOL)
}

/// A generated scene with its ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedScene {
    pub spec: SceneSpec,
    pub bundle: SceneBundle,
    /// Aligned with `bundle.views`.
    pub truth: Vec<ViewTruth>,
}

impl GeneratedScene {
    /// Mean distance from each point to the nearest surface.
    pub fn mean_surface_distance(&self, points: &[Vec3]) -> f64 {
        points.iter().map(|p| distance_to_surfaces(&self.spec.surfaces, p)).sum::<f64>() / points.len() as f64
    }
}

fn pair_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// Stream ids separating the independent random draws of a scene.
const STREAM_DEPTH: u64 = 1 << 62;

/// Ray-casts every view, samples COLMAP points, writes scaled noisy depth
/// and exact oracle correspondences.
///
/// Geometry (views, truth, COLMAP points) depends only on the scene description, never on
/// the seed; the seed drives depth and match noise.
pub fn generate_scene(spec: &SceneSpec) -> Result<GeneratedScene> {
    spec.validate()?;
    let views = spec.views()?;
    let truth: Vec<ViewTruth> = views.par_iter().map(|v| render_truth(&spec.surfaces, v)).collect();
    for (v, t) in views.iter().zip(&truth) {
        if t.hits.iter().all(Option::is_none) {
            return Err(Error::DegenerateSpec(format!("view {} sees no surface", v.view_id)));
        }
    }

    let colmap = sample_colmap_points(spec, &views, &truth);
    if colmap.is_empty() {
        return Err(Error::DegenerateSpec("no surface point is seen by two views".into()));
    }
    let mut bundle = SceneBundle::new(views.clone(), colmap)?;
    bundle.colmap_point_ids = (1..=bundle.colmap_points.len() as u64).collect();

    if spec.depth {
        let noise = Normal::new(0.0, spec.depth_noise).map_err(|e| Error::DegenerateSpec(e.to_string()))?;
        for (i, (v, t)) in views.iter().zip(&truth).enumerate() {
            let scale = spec.depth_scale(i);
            let mut rng = pair_rng(spec.seed, STREAM_DEPTH | v.view_id as u64);
            let values = t
                .hits
                .iter()
                .map(|h| match h {
                    Some(h) => {
                        let k = if spec.depth_noise > 0.0 { 1.0 + noise.sample(&mut rng) } else { 1.0 };
                        (h.depth * scale * k) as f32
                    }
                    None => -1.0,
                })
                .collect();
            bundle = bundle.with_depth_map(v.view_id, DepthMap::new(v.width, v.height, values)?)?;
        }
    }
    let sets = oracle_correspondences(&spec.surfaces, &views, &truth, spec.match_noise_px, spec.match_dropout, spec.seed);
    bundle = bundle.with_correspondences(sets)?;
    Ok(GeneratedScene { spec: spec.clone(), bundle, truth })
}

/// Every `k`-th multi-view surface point in (view, row-major) order, with
/// `k` chosen to give about `spec.colmap_points` points.
fn sample_colmap_points(spec: &SceneSpec, views: &[CameraView], truth: &[ViewTruth]) -> PointCloud {
    let mut candidates = Vec::new();
    for (i, t) in truth.iter().enumerate() {
        for h in t.hits.iter().flatten() {
            let seen_elsewhere = views
                .iter()
                .enumerate()
                .any(|(j, v)| j != i && visible_in(&spec.surfaces, v, &h.point));
            if seen_elsewhere {
                candidates.push(*h);
            }
        }
    }
    if candidates.is_empty() || spec.colmap_points == 0 {
        return PointCloud::default();
    }
    let step = (candidates.len() / spec.colmap_points).max(1);
    candidates
        .iter()
        .step_by(step)
        .take(spec.colmap_points)
        .map(|h| Point::new(h.point, Source::Colmap).with_color(spec.surfaces[h.surface].color()))
        .collect()
}

/// Exact dense matches: pixel (x, y) of view i matches view j when its
/// surface point is visible in j. The destination is perturbed by isotropic
/// Gaussian noise of `noise_px`; perturbed matches leaving the image are
/// dropped, then each match is removed with probability `dropout`. Pairs
/// left without matches are omitted.
pub fn oracle_correspondences(
    primitives: &[Primitive],
    views: &[CameraView],
    truth: &[ViewTruth],
    noise_px: f64,
    dropout: f64,
    seed: u64,
) -> Vec<CorrespondenceSet> {
    let pairs: Vec<(usize, usize)> = (0..views.len())
        .flat_map(|i| (0..views.len()).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    pairs
        .par_iter()
        .map(|&(i, j)| {
            let (src, dst) = (&views[i], &views[j]);
            let mut rng = pair_rng(seed, ((src.view_id as u64) << 32) | dst.view_id as u64);
            let noise = Normal::new(0.0, noise_px).expect("non-negative std");
            let mut set = CorrespondenceSet::new(src.view_id, dst.view_id);
            for y in 0..src.height {
                for x in 0..src.width {
                    let Some(h) = truth[i].hit(x, y) else { continue };
                    if !visible_in(primitives, dst, &h.point) {
                        continue;
                    }
                    let proj = dst.project(&h.point).expect("visible");
                    let mut px = proj.pixel;
                    if noise_px > 0.0 {
                        px.x += noise.sample(&mut rng);
                        px.y += noise.sample(&mut rng);
                    }
                    let drop = dropout > 0.0 && rng.random::<f64>() < dropout;
                    if drop || !dst.contains(&px) {
                        continue;
                    }
                    set.matches.push(Match { src: Pixel::center_of(x, y), dst: px, conf: 1.0 });
                }
            }
            set
        })
        .filter(|set| !set.is_empty())
        .collect()
}

/// Covisibility counts straight from the geometry: for every pixel with a
/// surface hit, the number of other views in which that point is visible.
pub fn oracle_covis_map(primitives: &[Primitive], views: &[CameraView], truth: &[ViewTruth]) -> Vec<CovisMap> {
    let n = views.len() as u32;
    views
        .iter()
        .zip(truth)
        .map(|(v, t)| {
            let mut counts = vec![0u16; t.hits.len()];
            for (idx, hit) in t.hits.iter().enumerate() {
                let Some(h) = hit else { continue };
                for other in views {
                    if other.view_id == v.view_id {
                        continue;
                    }
                    // Independent visibility test: project by hand, then compare
                    // the point's depth against every surface along that ray.
                    let pc = other.rotation() * h.point + other.translation();
                    if pc.z <= 0.0 {
                        continue;
                    }
                    let k = other.intrinsics;
                    let (u, w) = (k.fx * pc.x / pc.z + k.cx, k.fy * pc.y / pc.z + k.cy);
                    if !(u >= 0.0 && w >= 0.0 && u < other.width as f64 && w < other.height as f64) {
                        continue;
                    }
                    let dir = other.rotation().transpose() * Vec3::new((u - k.cx) / k.fx, (w - k.cy) / k.fy, 1.0);
                    let origin = other.center();
                    let occluded = primitives
                        .iter()
                        .filter_map(|p| p.intersect(&origin, &dir))
                        .any(|t| t < pc.z - OCCLUSION_TOL);
                    if !occluded {
                        counts[idx] += 1;
                    }
                }
            }
            CovisMap::from_counts(v.view_id, v.width, v.height, n, counts).expect("count below n")
        })
        .collect()
}

/// Per-pixel recount of a covisibility map from raw matches by a naive loop.
pub fn oracle_covis_recount(view: &CameraView, sets: &[&CorrespondenceSet], n_views: u32, min_conf: f64) -> Vec<u16> {
    let mut counts = vec![0u16; view.width as usize * view.height as usize];
    for y in 0..view.height {
        for x in 0..view.width {
            let mut seen: Vec<u32> = Vec::new();
            for s in sets {
                for m in &s.matches {
                    if m.conf >= min_conf
                        && m.src.x.floor() == x as f64
                        && m.src.y.floor() == y as f64
                        && !seen.contains(&s.dst_view)
                    {
                        seen.push(s.dst_view);
                    }
                }
            }
            counts[(y * view.width + x) as usize] = seen.len().min(n_views as usize - 1) as u16;
        }
    }
    counts
}

/// Exact nearest-neighbor distance of each query by exhaustive scan.
pub fn oracle_nearest_neighbor(cloud: &[Vec3], queries: &[Vec3]) -> Vec<f64> {
    queries
        .iter()
        .map(|q| cloud.iter().map(|p| (p - q).norm()).fold(f64::INFINITY, f64::min))
        .collect()
}

/// Sidecar written next to a generated scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub spec: SceneSpec,
    /// Depth scale applied to each view's written depth map.
    pub depth_scales: Vec<f64>,
    /// Directory (relative to the scene) holding exact float32 depth maps.
    pub exact_depth_dir: String,
}

/// Writes the bundle plus `ground_truth.json` and exact depth maps.
pub fn write_generated_scene(scene: &GeneratedScene, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_scene(&scene.bundle, dir)?;
    let gt_dir = dir.join(GT_DEPTH_DIR);
    fs::create_dir_all(&gt_dir)?;
    for (v, t) in scene.bundle.views.iter().zip(&scene.truth) {
        crate::io::write_depth_map(&t.depth_map(), gt_dir.join(depth_file_name(v.view_id)))?;
    }
    let record = GroundTruthRecord {
        spec: scene.spec.clone(),
        depth_scales: (0..scene.bundle.views.len()).map(|i| scene.spec.depth_scale(i)).collect(),
        exact_depth_dir: GT_DEPTH_DIR.to_string(),
    };
    crate::io::write_json(&record, dir.join(GROUND_TRUTH_FILE))
}

/// Reads `ground_truth.json` from a scene directory and regenerates the scene.
pub fn load_ground_truth(dir: &Path) -> Result<GeneratedScene> {
    let path = dir.join(GROUND_TRUTH_FILE);
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let record: GroundTruthRecord = serde_json::from_str(&fs::read_to_string(&path)?)?;
    generate_scene(&record.spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covis::build_covis_map;

    fn plane_spec() -> SceneSpec {
        SceneSpec::from_json(
            r#"{
                "resolution": [40, 30],
                "surfaces": [{"type": "plane", "point": [0, 0, 2], "normal": [0, 0, -1], "color": [10, 20, 30]}],
                "rig": {"type": "forward_facing", "views": 3, "baseline": 0.0001},
                "colmap_points": 50
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn plane_depth_is_constant() {
        let spec = SceneSpec { rig: RigSpec::ForwardFacing { views: 1, baseline: 0.0, target: None }, ..plane_spec() };
        let views = spec.views().unwrap();
        let t = render_truth(&spec.surfaces, &views[0]);
        assert!(t.hits.iter().all(|h| h.unwrap().depth == 2.0));
    }

    #[test]
    fn sphere_depth_minimal_at_principal_pixel() {
        let spec = SceneSpec::from_json(
            r#"{
                "resolution": [41, 41],
                "surfaces": [{"type": "sphere", "center": [0, 0, 5], "radius": 1.5, "color": [1, 1, 1]}],
                "rig": {"type": "forward_facing", "views": 1, "baseline": 0}
            }"#,
        )
        .unwrap();
        let views = spec.views().unwrap();
        let t = render_truth(&spec.surfaces, &views[0]);
        let center = t.hit(20, 20).unwrap().depth;
        assert!((center - 3.5).abs() < 1e-12);
        assert!(t.hits.iter().flatten().all(|h| h.depth >= center));
    }

    #[test]
    fn ray_cast_matches_closed_form() {
        let spec = plane_spec();
        let views = spec.views().unwrap();
        let v = &views[2];
        for (y, x) in [(0u32, 0u32), (7, 31), (29, 39)] {
            let px = Pixel::center_of(x, y);
            let hit = cast_pixel(&spec.surfaces, v, px).unwrap();
            // Plane z = 2 seen by a camera with identity rotation at height 0.
            assert_eq!(hit.depth, 2.0);
            let expected = v.unproject(px, 2.0).unwrap();
            assert!((hit.point - expected).norm() < 1e-15);
        }
    }

    #[test]
    fn coincident_views_match_every_pixel_both_ways() {
        let scene = generate_scene(&plane_spec()).unwrap();
        let covered = |id: u32| scene.truth[id as usize].hits.iter().filter(|h| h.is_some()).count();
        for s in &scene.bundle.correspondences {
            // Baselines of 0.1 mm shift every projection by well under a pixel;
            // only border columns can leave the neighbor's image.
            assert!(s.len() as f64 >= 0.95 * covered(s.src_view) as f64, "{} of {}", s.len(), covered(s.src_view));
        }
    }

    #[test]
    fn full_dropout_empties_sets() {
        let spec = SceneSpec { match_dropout: 1.0, ..plane_spec() };
        let scene = generate_scene(&spec).unwrap();
        assert!(scene.bundle.correspondences.iter().all(|s| s.is_empty()));
    }

    #[test]
    fn occluded_points_are_not_matched() {
        let spec = SceneSpec::from_json(
            r#"{
                "resolution": [48, 48],
                "fov_deg": 70,
                "surfaces": [
                    {"type": "sphere", "center": [0, 0, 0], "radius": 0.8, "color": [200, 0, 0]},
                    {"type": "plane", "point": [0, 0, 3], "normal": [0, 0, -1], "color": [0, 0, 200]}
                ],
                "rig": {"type": "explicit", "cameras": [
                    {"eye": [0, 0, -4], "target": [0, 0, 0]},
                    {"eye": [2.5, 0, -3], "target": [0, 0, 0]}
                ]}
            }"#,
        )
        .unwrap();
        let scene = generate_scene(&spec).unwrap();
        let set = scene.bundle.correspondences.iter().find(|s| s.src_view == 0 && s.dst_view == 1).unwrap();
        let views = &scene.bundle.views;
        let mut occluded = 0;
        for y in 0..48 {
            for x in 0..48 {
                let Some(h) = scene.truth[0].hit(x, y) else { continue };
                // Brute-force: does any surface cut the segment from view 1's center to the point?
                let c = views[1].center();
                let d = h.point - c;
                let blocked = spec.surfaces.iter().any(|s| s.intersect(&c, &d).is_some_and(|t| t < 1.0 - 1e-9));
                let in_view = views[1].project(&h.point).is_some();
                let matched = set.matches.iter().any(|m| m.src == Pixel::center_of(x, y));
                assert_eq!(matched, in_view && !blocked, "pixel ({x}, {y})");
                occluded += (in_view && blocked) as usize;
            }
        }
        assert!(occluded > 0, "scene should contain occluded plane points");
    }

    #[test]
    fn covis_oracle_agrees_with_built_maps() {
        let scene = generate_scene(&plane_spec()).unwrap();
        let oracle = oracle_covis_map(&scene.spec.surfaces, &scene.bundle.views, &scene.truth);
        for (v, o) in scene.bundle.views.iter().zip(&oracle) {
            let built = build_covis_map(v, &scene.bundle.correspondences_from(v.view_id), 3, 0.0).unwrap();
            assert_eq!(&built, o);
        }
    }

    #[test]
    fn single_view_maps_are_zero() {
        let spec = SceneSpec { rig: RigSpec::ForwardFacing { views: 1, baseline: 0.0, target: None }, ..plane_spec() };
        let views = spec.views().unwrap();
        let truth = vec![render_truth(&spec.surfaces, &views[0])];
        let maps = oracle_covis_map(&spec.surfaces, &views, &truth);
        assert!(maps[0].counts().iter().all(|&c| c == 0));
    }

    #[test]
    fn nearest_neighbor_oracle() {
        let cloud = vec![Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0)];
        assert_eq!(oracle_nearest_neighbor(&cloud, &[Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)]), vec![0.0, 1.0]);
    }

    #[test]
    fn seed_changes_noise_but_not_geometry() {
        let base = SceneSpec { match_noise_px: 0.5, depth_noise: 0.01, ..plane_spec() };
        let a = generate_scene(&base).unwrap();
        let b = generate_scene(&SceneSpec { seed: 1, ..base.clone() }).unwrap();
        let a2 = generate_scene(&base).unwrap();
        assert_eq!(a.bundle, a2.bundle);
        assert_eq!(a.bundle.views, b.bundle.views);
        assert_eq!(a.bundle.colmap_points, b.bundle.colmap_points);
        assert_eq!(a.truth, b.truth);
        assert_ne!(a.bundle.correspondences, b.bundle.correspondences);
        assert_ne!(a.bundle.depth_maps, b.bundle.depth_maps);
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        let mut spec = plane_spec();
        spec.surfaces.clear();
        assert!(matches!(generate_scene(&spec), Err(Error::DegenerateSpec(_))));
        // Camera facing away from the only surface.
        let away = SceneSpec {
            rig: RigSpec::Explicit {
                cameras: vec![CameraSpec { eye: [0.0, 0.0, 0.0], target: [0.0, 0.0, -1.0], up: default_up() }],
            },
            ..plane_spec()
        };
        assert!(matches!(generate_scene(&away), Err(Error::DegenerateSpec(_))));
        assert!(SceneSpec::from_json(r#"{"resolution": [1, 1]}"#).is_err());
    }
}
