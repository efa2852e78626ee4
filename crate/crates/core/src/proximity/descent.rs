//! Gradient descent on Gaussian positions under the proximity loss alone.

use super::loss::proximity_loss_grad;
use super::mlp::ProximityModel;
use crate::camera::CameraView;
use crate::covis::{CovisMap, SceneCovisScore};
use crate::error::{Error, Result};
use crate::Vec3;

/// Step length in normalized model coordinates.
pub const DEFAULT_STEP: f64 = 0.01;
pub const DEFAULT_SNAPSHOT_EVERY: usize = 50;

/// Runs `steps` fixed-length steps. Step `k` uses view `k mod n` and moves
/// every Gaussian with a non-zero gradient by `step` normalized units
/// against its gradient. `observe` sees the positions before the first step
/// and after every step.
pub fn descend(
    model: &ProximityModel,
    init: &[Vec3],
    views: &[CameraView],
    maps: &[CovisMap],
    score: &SceneCovisScore,
    steps: usize,
    step: f64,
    mut observe: impl FnMut(usize, &[Vec3]) -> Result<()>,
) -> Result<Vec<Vec3>> {
    if views.is_empty() || views.len() != maps.len() {
        return Err(Error::MapViewMismatch(format!("{} views but {} maps", views.len(), maps.len())));
    }
    if !(step >= 0.0) || !step.is_finite() {
        return Err(Error::InvalidParameter(format!("step must be non-negative, got {step}")));
    }
    let world_step = step * model.normalization.scale;
    let mut positions = init.to_vec();
    observe(0, &positions)?;
    for k in 0..steps {
        let i = k % views.len();
        let grads = proximity_loss_grad(model, &positions, &views[i], &maps[i], score)?;
        for (p, g) in positions.iter_mut().zip(grads) {
            let norm = g.norm();
            if norm > 0.0 {
                *p -= g * (world_step / norm);
            }
        }
        observe(k + 1, &positions)?;
    }
    Ok(positions)
}
