//! Covisibility-weighted proximity loss, its gradient, and the total objective.

use serde::{Deserialize, Serialize};

use super::mlp::ProximityModel;
use crate::camera::{CameraView, Pixel};
use crate::cloud::{Point, PointCloud};
use crate::covis::{covis_at, CovisMap, SceneCovisScore};
use crate::error::{Error, Result};
use crate::Vec3;

/// `1 / (count + 1)` at the pixel containing `pixel`.
pub fn weight_in(map: &CovisMap, pixel: Pixel) -> Result<f64> {
    Ok(1.0 / (covis_at(map, pixel)? as f64 + 1.0))
}

/// `max(0, (S − 0.7) / 0.3)`, evaluated as `(10·S − 7) / 3` and clamped to
/// `[0, 1]`. The rearranged form is exact at S = 0.7, 0.85 and 1.0 where the
/// literal quotient lands one ulp off.
pub fn weight_out(score: &SceneCovisScore) -> f64 {
    weight_out_from(score.score)
}

pub fn weight_out_from(s: f64) -> f64 {
    ((10.0 * s - 7.0) / 3.0).clamp(0.0, 1.0)
}

/// Per-Gaussian breakdown of the loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianTerm {
    /// Frustum indicator χ(g).
    pub in_frustum: bool,
    pub weight: f64,
    pub score: f64,
}

impl GaussianTerm {
    /// `weight · (1 − s)`.
    pub fn contribution(&self) -> f64 {
        self.weight * (1.0 - self.score)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub loss: f64,
    pub terms: Vec<GaussianTerm>,
}

fn check_inputs(gaussians: &[Vec3], view: &CameraView, map: &CovisMap) -> Result<()> {
    if gaussians.is_empty() {
        return Err(Error::EmptyInput("no Gaussians".into()));
    }
    if map.view_id != view.view_id || (map.width, map.height) != (view.width, view.height) {
        return Err(Error::MapViewMismatch(format!("map of view {} used with view {}", map.view_id, view.view_id)));
    }
    if let Some(g) = gaussians.iter().find(|g| !g.iter().all(|v| v.is_finite())) {
        return Err(Error::InvalidParameter(format!("non-finite Gaussian position {g:?}")));
    }
    Ok(())
}

/// Weight of one Gaussian: `w_in` at its projected pixel when it projects
/// in front of the camera and inside the image, `w_out` otherwise.
fn weight_of(g: &Vec3, view: &CameraView, map: &CovisMap, w_out: f64) -> Result<(bool, f64)> {
    match view.project(g) {
        Some(proj) => Ok((true, weight_in(map, proj.pixel)?)),
        None => Ok((false, w_out)),
    }
}

/// Batched loss: scores are evaluated in one pass and the mean is taken over
/// every Gaussian, in frustum or not.
pub fn proximity_loss(
    model: &ProximityModel,
    gaussians: &[Vec3],
    view: &CameraView,
    map: &CovisMap,
    score: &SceneCovisScore,
) -> Result<LossEval> {
    check_inputs(gaussians, view, map)?;
    let w_out = weight_out(score);
    let scores = model.score_batch(gaussians);
    let terms = gaussians
        .iter()
        .zip(scores)
        .map(|(g, s)| {
            let (in_frustum, weight) = weight_of(g, view, map, w_out)?;
            Ok(GaussianTerm { in_frustum, weight, score: s })
        })
        .collect::<Result<Vec<_>>>()?;
    let loss = terms.iter().map(GaussianTerm::contribution).sum::<f64>() / gaussians.len() as f64;
    Ok(LossEval { loss, terms })
}

/// Reference evaluation: one Gaussian at a time through the scalar forward
/// pass and the weight formulas written out directly.
pub fn proximity_loss_naive(
    model: &ProximityModel,
    gaussians: &[Vec3],
    view: &CameraView,
    map: &CovisMap,
    score: &SceneCovisScore,
) -> Result<f64> {
    check_inputs(gaussians, view, map)?;
    let mut total = 0.0;
    for g in gaussians {
        let s = model.score(g);
        let pc = view.rotation() * g + view.translation();
        let k = view.intrinsics;
        let (u, v) = (k.fx * pc.x / pc.z + k.cx, k.fy * pc.y / pc.z + k.cy);
        let inside = pc.z > 0.0 && u >= 0.0 && v >= 0.0 && u < view.width as f64 && v < view.height as f64;
        let weight = if inside {
            let count = map.counts()[v.floor() as usize * map.width as usize + u.floor() as usize];
            1.0 / (count as f64 + 1.0)
        } else {
            (0.0f64).max((score.score - 0.7) / 0.3).min(1.0)
        };
        total += weight * (1.0 - s);
    }
    Ok(total / gaussians.len() as f64)
}

/// `∂L_p/∂g` for every Gaussian, holding each weight constant.
pub fn proximity_loss_grad(
    model: &ProximityModel,
    gaussians: &[Vec3],
    view: &CameraView,
    map: &CovisMap,
    score: &SceneCovisScore,
) -> Result<Vec<Vec3>> {
    check_inputs(gaussians, view, map)?;
    let w_out = weight_out(score);
    let inv_n = 1.0 / gaussians.len() as f64;
    gaussians
        .iter()
        .zip(model.score_and_grad_batch(gaussians))
        .map(|(g, (_, ds))| {
            let (_, w) = weight_of(g, view, map, w_out)?;
            Ok(ds * (-w * inv_n))
        })
        .collect()
}

/// `(1 − λ)·L1 + λ·L_D-SSIM + L_p`.
pub fn total_objective(l1: f64, dssim: f64, lambda: f64, l_p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    Ok((1.0 - lambda) * l1 + lambda * dssim + l_p)
}

pub const NEAR_COLOR: [u8; 3] = [0, 0, 255];
pub const FAR_COLOR: [u8; 3] = [255, 0, 0];
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Near/far labels of a cloud under the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub scores: Vec<f64>,
    /// `true` when `s ≥ threshold`.
    pub near: Vec<bool>,
    pub threshold: f64,
}

impl Classification {
    pub fn near_fraction(&self) -> f64 {
        if self.near.is_empty() {
            return 0.0;
        }
        self.near.iter().filter(|&&n| n).count() as f64 / self.near.len() as f64
    }

    /// Copy of `cloud` with near points blue and far points red.
    pub fn colored(&self, cloud: &PointCloud) -> PointCloud {
        cloud
            .points
            .iter()
            .zip(&self.near)
            .map(|(p, &near)| Point { color: Some(if near { NEAR_COLOR } else { FAR_COLOR }), ..p.clone() })
            .collect()
    }
}

pub fn classify_cloud(model: &ProximityModel, cloud: &PointCloud, threshold: f64) -> Classification {
    let scores = model.score_batch(&cloud.positions());
    let near = scores.iter().map(|&s| s >= threshold).collect();
    Classification { scores, near, threshold }
}
