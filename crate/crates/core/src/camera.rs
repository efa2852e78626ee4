//! Pinhole camera geometry: projection, depth unprojection, joint multi-view
//! triangulation and reprojection error.
//!
//! Pixel convention: integer pixel `(x, y)` covers the continuous square
//! `[x, x + 1) × [y, y + 1)`, so the top-left pixel center sits at `(0.5, 0.5)`.
//! Projections return continuous coordinates and map lookups floor them.

use nalgebra::{DMatrix, Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

/// Default reprojection gate for accepting a triangulated point, in pixels.
pub const DEFAULT_GATE_PX: f64 = 2.0;

const ROTATION_TOL: f64 = 1e-8;
const PARALLEL_RAY_TOL: f64 = 1e-10;

/// A continuous image coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub x: f64,
    pub y: f64,
}

impl Pixel {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Center of the integer pixel `(x, y)`.
    pub fn center_of(x: u32, y: u32) -> Self {
        Self::new(x as f64 + 0.5, y as f64 + 0.5)
    }

    /// Integer pixel containing this coordinate, if it lies inside a `width × height` image.
    pub fn floor_in(&self, width: u32, height: u32) -> Option<(u32, u32)> {
        if self.x >= 0.0 && self.y >= 0.0 && self.x < width as f64 && self.y < height as f64 {
            Some((self.x.floor() as u32, self.y.floor() as u32))
        } else {
            None
        }
    }

    pub fn distance(&self, other: &Pixel) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self { fx, fy, cx, cy }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

/// A ray with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Result of projecting a world point into a view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Pixel,
    /// Camera-frame z coordinate, meters.
    pub depth: f64,
}

/// A calibrated pinhole view with a world-to-camera rigid transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraView {
    pub view_id: u32,
    pub intrinsics: Intrinsics,
    rotation: Matrix3<f64>,
    translation: Vec3,
    pub width: u32,
    pub height: u32,
}

impl CameraView {
    /// Creates a view from a world-to-camera rotation and translation
    /// (`p_cam = R p_world + t`), validating intrinsics and the rotation.
    pub fn new(
        view_id: u32,
        intrinsics: Intrinsics,
        rotation: Matrix3<f64>,
        translation: Vec3,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let Intrinsics { fx, fy, cx, cy } = intrinsics;
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::InvalidCamera(format!(
                "view {view_id}: focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if !(cx > 0.0 && cx < width as f64 && cy > 0.0 && cy < height as f64) {
            return Err(Error::InvalidCamera(format!(
                "view {view_id}: principal point ({cx}, {cy}) outside the {width}x{height} image"
            )));
        }
        let ortho_err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(ortho_err <= ROTATION_TOL) || (rotation.determinant() - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidCamera(format!(
                "view {view_id}: rotation is not a proper orthonormal matrix"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidCamera(format!(
                "view {view_id}: translation is not finite"
            )));
        }
        Ok(Self {
            view_id,
            intrinsics,
            rotation,
            translation,
            width,
            height,
        })
    }

    /// Camera at `eye` looking at `target`, with image-down roughly opposite to `up`.
    pub fn look_at(
        view_id: u32,
        intrinsics: Intrinsics,
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let forward = (target - eye).try_normalize(1e-12).ok_or_else(|| {
            Error::InvalidCamera(format!("view {view_id}: eye coincides with target"))
        })?;
        let right = forward.cross(&up).try_normalize(1e-12).ok_or_else(|| {
            Error::InvalidCamera(format!("view {view_id}: up vector parallel to view direction"))
        })?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Self::new(view_id, intrinsics, rotation, translation, width, height)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// The 4×4 world-to-camera transform.
    pub fn pose_matrix(&self) -> Matrix4<f64> {
        let mut h = Matrix4::identity();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        h
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn camera_to_world(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Projects a camera-frame point, ignoring image bounds. `None` unless in front of the camera.
    pub fn project_camera_point(&self, pc: &Vec3) -> Option<Projection> {
        if !(pc.z > 0.0) {
            return None;
        }
        let Intrinsics { fx, fy, cx, cy } = self.intrinsics;
        Some(Projection {
            pixel: Pixel::new(fx * pc.x / pc.z + cx, fy * pc.y / pc.z + cy),
            depth: pc.z,
        })
    }

    /// Projection ignoring image bounds but enforcing cheirality.
    pub fn project_unbounded(&self, p: &Vec3) -> Option<Projection> {
        self.project_camera_point(&self.world_to_camera(p))
    }

    /// Projects a world point. Absent when the point is behind the camera or
    /// falls outside `[0, W) × [0, H)`.
    pub fn project(&self, p: &Vec3) -> Option<Projection> {
        self.project_unbounded(p).filter(|proj| self.contains(&proj.pixel))
    }

    pub fn contains(&self, pixel: &Pixel) -> bool {
        pixel.floor_in(self.width, self.height).is_some()
    }

    /// Camera-frame point at `depth` (z) along the ray through `pixel`.
    pub fn unproject_camera(&self, pixel: Pixel, depth: f64) -> Result<Vec3> {
        if !(depth > 0.0) || !depth.is_finite() {
            return Err(Error::NonPositiveDepth(depth));
        }
        let Intrinsics { fx, fy, cx, cy } = self.intrinsics;
        Ok(Vec3::new(
            (pixel.x - cx) / fx * depth,
            (pixel.y - cy) / fy * depth,
            depth,
        ))
    }

    /// World point at camera-frame depth `depth` along the ray through `pixel`.
    pub fn unproject(&self, pixel: Pixel, depth: f64) -> Result<Vec3> {
        Ok(self.camera_to_world(&self.unproject_camera(pixel, depth)?))
    }

    /// World-space ray from the camera center through `pixel`.
    pub fn ray(&self, pixel: Pixel) -> Ray {
        let Intrinsics { fx, fy, cx, cy } = self.intrinsics;
        let dir_cam = Vec3::new((pixel.x - cx) / fx, (pixel.y - cy) / fy, 1.0);
        Ray::new(self.center(), self.rotation.transpose() * dir_cam)
    }
}

/// Pixel distance between the projection of `p` and `pixel`.
pub fn reprojection_error(view: &CameraView, p: &Vec3, pixel: Pixel) -> Result<f64> {
    let proj = view.project_unbounded(p).ok_or(Error::BehindCamera)?;
    Ok(proj.pixel.distance(&pixel))
}

/// An accepted triangulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    pub point: Vec3,
    /// Reprojection error per observation, in input order.
    pub errors: Vec<f64>,
}

impl Triangulation {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Jointly triangulates one point from all observations.
///
/// Homogeneous DLT in normalized image coordinates, then one Gauss-Newton
/// step on the pixel reprojection error. Returns `Ok(None)` when the point is
/// behind any camera or any reprojection error exceeds `gate_px`.
pub fn triangulate(observations: &[(&CameraView, Pixel)], gate_px: f64) -> Result<Option<Triangulation>> {
    if observations.len() < 2 {
        return Err(Error::InsufficientObservations(observations.len()));
    }
    for (i, (a, _)) in observations.iter().enumerate() {
        if observations[..i].iter().any(|(b, _)| b.view_id == a.view_id) {
            return Err(Error::InsufficientObservations(observations.len()));
        }
    }

    let rays: Vec<Vec3> = observations.iter().map(|(v, px)| v.ray(*px).direction).collect();
    let mut max_angle: f64 = 0.0;
    for i in 0..rays.len() {
        for j in i + 1..rays.len() {
            let angle = rays[i].cross(&rays[j]).norm().atan2(rays[i].dot(&rays[j]));
            max_angle = max_angle.max(angle);
        }
    }
    let centers_coincide = observations
        .iter()
        .all(|(v, _)| (v.center() - observations[0].0.center()).norm() < 1e-12);
    if max_angle < PARALLEL_RAY_TOL || centers_coincide {
        return Err(Error::DegenerateGeometry);
    }

    let Some(mut point) = dlt(observations) else {
        return Ok(None);
    };
    if let Some(refined) = gauss_newton_step(observations, &point) {
        point = refined;
    }

    let mut errors = Vec::with_capacity(observations.len());
    for (view, px) in observations {
        match reprojection_error(view, &point, *px) {
            Ok(e) if e <= gate_px => errors.push(e),
            _ => return Ok(None),
        }
    }
    Ok(Some(Triangulation { point, errors }))
}

fn dlt(observations: &[(&CameraView, Pixel)]) -> Option<Vec3> {
    let mut a = DMatrix::<f64>::zeros(2 * observations.len(), 4);
    for (k, (view, px)) in observations.iter().enumerate() {
        let Intrinsics { fx, fy, cx, cy } = view.intrinsics;
        let xn = (px.x - cx) / fx;
        let yn = (px.y - cy) / fy;
        let r = view.rotation();
        let t = view.translation();
        let row = |i: usize| nalgebra::RowVector4::new(r[(i, 0)], r[(i, 1)], r[(i, 2)], t[i]);
        let r0 = row(2) * xn - row(0);
        let r1 = row(2) * yn - row(1);
        a.row_mut(2 * k).copy_from(&(r0 / r0.norm().max(f64::MIN_POSITIVE)));
        a.row_mut(2 * k + 1).copy_from(&(r1 / r1.norm().max(f64::MIN_POSITIVE)));
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    // Singular values are sorted in descending order.
    let (min_idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let x = v_t.row(min_idx);
    if x[3].abs() <= f64::EPSILON * x.norm() {
        return None;
    }
    let p = Vec3::new(x[0] / x[3], x[1] / x[3], x[2] / x[3]);
    p.iter().all(|v| v.is_finite()).then_some(p)
}

fn gauss_newton_step(observations: &[(&CameraView, Pixel)], p: &Vec3) -> Option<Vec3> {
    let mut jtj = Matrix3::<f64>::zeros();
    let mut jtr = Vector3::<f64>::zeros();
    for (view, px) in observations {
        let pc = view.world_to_camera(p);
        if !(pc.z > 0.0) {
            return None;
        }
        let Intrinsics { fx, fy, cx, cy } = view.intrinsics;
        let inv_z = 1.0 / pc.z;
        let res = nalgebra::Vector2::new(fx * pc.x * inv_z + cx - px.x, fy * pc.y * inv_z + cy - px.y);
        let d_proj = nalgebra::Matrix2x3::new(
            fx * inv_z,
            0.0,
            -fx * pc.x * inv_z * inv_z,
            0.0,
            fy * inv_z,
            -fy * pc.y * inv_z * inv_z,
        );
        let j = d_proj * view.rotation();
        jtj += j.transpose() * j;
        jtr += j.transpose() * res;
    }
    let delta = jtj.cholesky()?.solve(&(-jtr));
    let refined = p + delta;
    refined.iter().all(|v| v.is_finite()).then_some(refined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    fn identity_view() -> CameraView {
        CameraView::new(
            0,
            Intrinsics::new(100.0, 100.0, 50.0, 50.0),
            Matrix3::identity(),
            Vec3::zeros(),
            100,
            100,
        )
        .unwrap()
    }

    /// Independent projection through the homogeneous 3×4 matrix K [R | t].
    fn oracle_project(view: &CameraView, p: &Vec3) -> (f64, f64) {
        let k = view.intrinsics.matrix();
        let h = view.pose_matrix();
        let p_mat = k * h.fixed_view::<3, 4>(0, 0);
        let x = p_mat * nalgebra::Vector4::new(p.x, p.y, p.z, 1.0);
        (x.x / x.z, x.y / x.z)
    }

    fn random_view(view_id: u32, yaw: f64, pitch: f64, t: Vec3) -> CameraView {
        let r = Rotation3::from_euler_angles(pitch, yaw, 0.1 * yaw).into_inner();
        CameraView::new(view_id, Intrinsics::new(320.0, 300.0, 160.0, 120.0), r, t, 320, 240).unwrap()
    }

    #[test]
    fn principal_axis_point_projects_to_principal_point() {
        let proj = identity_view().project(&Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(proj.pixel, Pixel::new(50.0, 50.0));
        assert_eq!(proj.depth, 2.0);
    }

    #[test]
    fn point_behind_camera_is_absent() {
        assert!(identity_view().project(&Vec3::new(0.0, 0.0, -1.0)).is_none());
    }

    #[test]
    fn projection_bounds_are_half_open() {
        let view = identity_view();
        // x = 100 lands exactly on the right edge.
        assert!(view.project(&Vec3::new(1.0, 0.0, 2.0)).is_none());
        assert!(view.project(&Vec3::new(-1.0, -1.0, 2.0)).is_some());
    }

    #[test]
    fn unproject_principal_pixel() {
        let p = identity_view().unproject(Pixel::new(50.0, 50.0), 2.0).unwrap();
        assert_eq!(p, Vec3::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn unproject_rejects_zero_depth() {
        assert!(matches!(
            identity_view().unproject(Pixel::new(10.0, 10.0), 0.0),
            Err(Error::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn invalid_intrinsics_and_rotation_are_rejected() {
        let bad_k = CameraView::new(0, Intrinsics::new(-1.0, 1.0, 5.0, 5.0), Matrix3::identity(), Vec3::zeros(), 10, 10);
        assert!(matches!(bad_k, Err(Error::InvalidCamera(_))));
        let bad_pp = CameraView::new(0, Intrinsics::new(1.0, 1.0, 10.0, 5.0), Matrix3::identity(), Vec3::zeros(), 10, 10);
        assert!(matches!(bad_pp, Err(Error::InvalidCamera(_))));
        let reflection = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        let bad_r = CameraView::new(0, Intrinsics::new(1.0, 1.0, 5.0, 5.0), reflection, Vec3::zeros(), 10, 10);
        assert!(matches!(bad_r, Err(Error::InvalidCamera(_))));
    }

    #[test]
    fn look_at_points_the_optical_axis_at_the_target() {
        let view = CameraView::look_at(
            3,
            Intrinsics::new(100.0, 100.0, 50.0, 50.0),
            Vec3::new(1.0, 2.0, -3.0),
            Vec3::new(0.5, 0.0, 1.0),
            Vec3::new(0.0, -1.0, 0.0),
            100,
            100,
        )
        .unwrap();
        let proj = view.project(&Vec3::new(0.5, 0.0, 1.0)).unwrap();
        assert!((proj.pixel.x - 50.0).abs() < 1e-9 && (proj.pixel.y - 50.0).abs() < 1e-9);
        assert!((view.center() - Vec3::new(1.0, 2.0, -3.0)).norm() < 1e-12);
    }

    #[test]
    fn projection_matches_homogeneous_oracle() {
        let view = random_view(1, 0.3, -0.2, Vec3::new(0.2, -0.1, 0.5));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        use rand::{Rng, SeedableRng};
        let mut checked = 0;
        for _ in 0..2000 {
            let p = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..6.0));
            if let Some(proj) = view.project(&p) {
                let (ox, oy) = oracle_project(&view, &p);
                assert!((proj.pixel.x - ox).abs() < 1e-9 && (proj.pixel.y - oy).abs() < 1e-9);
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn reprojection_error_constructed_offset() {
        let view = identity_view();
        let p = Vec3::new(0.0, 0.0, 2.0);
        assert_eq!(reprojection_error(&view, &p, Pixel::new(50.0, 50.0)).unwrap(), 0.0);
        let e = reprojection_error(&view, &p, Pixel::new(50.0 + 1.8, 50.0 - 2.4)).unwrap();
        assert!((e - 3.0).abs() < 1e-9);
        assert!(matches!(
            reprojection_error(&view, &Vec3::new(0.0, 0.0, -1.0), Pixel::new(0.0, 0.0)),
            Err(Error::BehindCamera)
        ));
    }

    fn stereo_pair() -> (CameraView, CameraView) {
        let k = Intrinsics::new(400.0, 400.0, 200.0, 150.0);
        let a = CameraView::new(0, k, Matrix3::identity(), Vec3::zeros(), 400, 300).unwrap();
        let b = CameraView::new(1, k, Matrix3::identity(), Vec3::new(-1.0, 0.0, 0.0), 400, 300).unwrap();
        (a, b)
    }

    #[test]
    fn triangulates_exact_observations() {
        let (a, b) = stereo_pair();
        let gt = Vec3::new(0.4, -0.3, 5.0);
        let obs = [
            (&a, a.project(&gt).unwrap().pixel),
            (&b, b.project(&gt).unwrap().pixel),
        ];
        let tri = triangulate(&obs, DEFAULT_GATE_PX).unwrap().unwrap();
        assert!((tri.point - gt).norm() < 1e-6);
        assert!(tri.max_error() < 1e-9);
        // Reported errors agree with reprojection_error.
        for ((view, px), e) in obs.iter().zip(&tri.errors) {
            assert!((reprojection_error(view, &tri.point, *px).unwrap() - e).abs() < 1e-12);
        }
    }

    #[test]
    fn five_pixel_noise_is_gated() {
        let (a, b) = stereo_pair();
        let gt = Vec3::new(0.4, -0.3, 5.0);
        let pa = a.project(&gt).unwrap().pixel;
        let pb = b.project(&gt).unwrap().pixel;
        // Vertical disagreement cannot be absorbed by depth.
        let obs = [(&a, Pixel::new(pa.x, pa.y + 5.0)), (&b, Pixel::new(pb.x, pb.y - 5.0))];
        assert!(triangulate(&obs, DEFAULT_GATE_PX).unwrap().is_none());
    }

    #[test]
    fn identical_views_are_degenerate() {
        let (a, _) = stereo_pair();
        let mut b = a.clone();
        b.view_id = 1;
        let px = Pixel::new(120.0, 80.0);
        assert!(matches!(
            triangulate(&[(&a, px), (&b, px)], DEFAULT_GATE_PX),
            Err(Error::DegenerateGeometry)
        ));
    }

    #[test]
    fn triangulation_needs_two_distinct_views() {
        let (a, _) = stereo_pair();
        let px = Pixel::new(120.0, 80.0);
        assert!(matches!(triangulate(&[(&a, px)], 2.0), Err(Error::InsufficientObservations(1))));
        assert!(matches!(
            triangulate(&[(&a, px), (&a, px)], 2.0),
            Err(Error::InsufficientObservations(2))
        ));
    }

    #[test]
    fn point_behind_cameras_is_skipped() {
        let (a, b) = stereo_pair();
        // Rays that only meet behind both cameras.
        let gt = Vec3::new(0.4, -0.3, 5.0);
        let pa = a.project(&gt).unwrap().pixel;
        let pb = b.project(&gt).unwrap().pixel;
        let obs = [(&a, pb), (&b, pa)];
        assert!(triangulate(&obs, 1e6).unwrap().is_none());
    }

    proptest! {
        #[test]
        fn project_unproject_round_trip(
            yaw in -1.0f64..1.0, pitch in -0.5f64..0.5,
            tx in -2.0f64..2.0, ty in -2.0f64..2.0, tz in -2.0f64..2.0,
            x in 0.0f64..320.0, y in 0.0f64..240.0, depth in 0.05f64..100.0,
        ) {
            let view = random_view(0, yaw, pitch, Vec3::new(tx, ty, tz));
            let px = Pixel::new(x.min(319.999), y.min(239.999));
            let p = view.unproject(px, depth).unwrap();
            let proj = view.project_unbounded(&p).unwrap();
            prop_assert!(proj.pixel.distance(&px) < 1e-9);
            prop_assert!((proj.depth - depth).abs() < 1e-9 * depth.max(1.0));
        }

        #[test]
        fn triangulation_exact_for_reasonable_baselines(
            baseline in 0.1f64..2.0, depth in 1.0f64..100.0,
            u in 0.1f64..0.9, v in 0.1f64..0.9, yaw in -0.3f64..0.3,
        ) {
            let k = Intrinsics::new(500.0, 500.0, 320.0, 240.0);
            let a = CameraView::new(0, k, Matrix3::identity(), Vec3::zeros(), 640, 480).unwrap();
            let rb = Rotation3::from_euler_angles(0.0, yaw * 0.1, 0.0).into_inner();
            let cb = Vec3::new(baseline, 0.0, 0.0);
            let b = CameraView::new(1, k, rb, -(rb * cb), 640, 480).unwrap();
            let gt = a.unproject(Pixel::new(u * 640.0, v * 480.0), depth).unwrap();
            let (Some(pa), Some(pb)) = (a.project(&gt), b.project(&gt)) else { return Ok(()); };
            let tri = triangulate(&[(&a, pa.pixel), (&b, pb.pixel)], 2.0).unwrap().unwrap();
            prop_assert!((tri.point - gt).norm() < 1e-6, "error {}", (tri.point - gt).norm());
        }

        #[test]
        fn reprojection_error_is_rigidly_invariant(
            ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0,
            sx in -3.0f64..3.0, sy in -3.0f64..3.0, sz in -3.0f64..3.0,
            ox in -1.0f64..1.0, oy in -1.0f64..1.0,
        ) {
            let view = random_view(0, 0.2, 0.1, Vec3::new(0.1, 0.2, 0.3));
            let p = view.unproject(Pixel::new(100.0, 80.0), 4.0).unwrap();
            let px = Pixel::new(100.0 + ox, 80.0 + oy);
            let before = reprojection_error(&view, &p, px).unwrap();
            // World transform g: p' = Q p + s. The camera becomes R Q^T, t - R Q^T s.
            let q = Rotation3::from_euler_angles(ax, ay, az).into_inner();
            let s = Vec3::new(sx, sy, sz);
            let r2 = view.rotation() * q.transpose();
            let t2 = view.translation() - r2 * s;
            let moved = CameraView::new(0, view.intrinsics, r2, t2, view.width, view.height).unwrap();
            let after = reprojection_error(&moved, &(q * p + s), px).unwrap();
            prop_assert!((before - after).abs() < 1e-9);
        }
    }
}
