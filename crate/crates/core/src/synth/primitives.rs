//! Closed-form ray intersection and distance for planes, spheres and boxes.

use serde::{Deserialize, Serialize};

use crate::Vec3;

// Hits closer than this along the ray are treated as starting on the surface.
const T_MIN: f64 = 1e-9;

/// One surface of a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    /// Infinite plane through `point` with normal `normal`.
    Plane { point: [f64; 3], normal: [f64; 3], color: [u8; 3] },
    Sphere { center: [f64; 3], radius: f64, color: [u8; 3] },
    /// Axis-aligned box.
    #[serde(rename = "box")]
    Aabb { min: [f64; 3], max: [f64; 3], color: [u8; 3] },
}

fn v(a: &[f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl Primitive {
    pub fn color(&self) -> [u8; 3] {
        match self {
            Primitive::Plane { color, .. } | Primitive::Sphere { color, .. } | Primitive::Aabb { color, .. } => *color,
        }
    }

    /// Checks the parameters describe a proper surface.
    pub fn validate(&self) -> Result<(), String> {
        let finite = |a: &[f64; 3]| a.iter().all(|x| x.is_finite());
        match self {
            Primitive::Plane { point, normal, .. } => {
                if !finite(point) || !finite(normal) || v(normal).norm() == 0.0 {
                    return Err("plane needs a finite point and a non-zero normal".into());
                }
            }
            Primitive::Sphere { center, radius, .. } => {
                if !finite(center) || !(*radius > 0.0) || !radius.is_finite() {
                    return Err("sphere needs a finite center and a positive radius".into());
                }
            }
            Primitive::Aabb { min, max, .. } => {
                if !finite(min) || !finite(max) || (0..3).any(|a| !(min[a] < max[a])) {
                    return Err("box needs min < max on every axis".into());
                }
            }
        }
        Ok(())
    }

    /// Smallest `t > 0` with `origin + t·dir` on the surface. `dir` need not
    /// be unit length; `t` is measured in multiples of it.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        match self {
            Primitive::Plane { point, normal, .. } => {
                let n = v(normal);
                let denom = n.dot(dir);
                if denom == 0.0 {
                    return None;
                }
                let t = n.dot(&(v(point) - origin)) / denom;
                (t > T_MIN).then_some(t)
            }
            Primitive::Sphere { center, radius, .. } => {
                let oc = origin - v(center);
                let a = dir.dot(dir);
                let half_b = oc.dot(dir);
                let c = oc.dot(&oc) - radius * radius;
                let disc = half_b * half_b - a * c;
                if disc < 0.0 {
                    return None;
                }
                // Numerically stable root pair.
                let sq = disc.sqrt();
                let q = -(half_b + half_b.signum() * sq);
                let (t0, t1) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
                let (near, far) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
                if near > T_MIN {
                    Some(near)
                } else if far > T_MIN {
                    Some(far)
                } else {
                    None
                }
            }
            Primitive::Aabb { min, max, .. } => {
                let (mut t_enter, mut t_exit) = (f64::NEG_INFINITY, f64::INFINITY);
                for a in 0..3 {
                    if dir[a] == 0.0 {
                        if origin[a] < min[a] || origin[a] > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let t0 = (min[a] - origin[a]) / dir[a];
                    let t1 = (max[a] - origin[a]) / dir[a];
                    let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
                    t_enter = t_enter.max(lo);
                    t_exit = t_exit.min(hi);
                }
                if t_enter > t_exit {
                    None
                } else if t_enter > T_MIN {
                    Some(t_enter)
                } else if t_exit > T_MIN {
                    Some(t_exit)
                } else {
                    None
                }
            }
        }
    }

    /// Unsigned Euclidean distance from `p` to the surface.
    pub fn distance(&self, p: &Vec3) -> f64 {
        match self {
            Primitive::Plane { point, normal, .. } => {
                let n = v(normal).normalize();
                n.dot(&(p - v(point))).abs()
            }
            Primitive::Sphere { center, radius, .. } => ((p - v(center)).norm() - radius).abs(),
            Primitive::Aabb { min, max, .. } => {
                let (lo, hi) = (v(min), v(max));
                let outside = (lo - p).sup(&(p - hi)).sup(&Vec3::zeros());
                if outside.norm() > 0.0 {
                    outside.norm()
                } else {
                    // Inside: distance to the nearest face.
                    (p - lo).min().min((hi - p).min())
                }
            }
        }
    }
}

/// Nearest hit over all primitives: `(t, primitive index)`.
pub fn cast(primitives: &[Primitive], origin: &Vec3, dir: &Vec3) -> Option<(f64, usize)> {
    primitives
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.intersect(origin, dir).map(|t| (t, i)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
}

/// Distance from `p` to the nearest surface.
pub fn distance_to_surfaces(primitives: &[Primitive], p: &Vec3) -> f64 {
    primitives.iter().map(|s| s.distance(p)).fold(f64::INFINITY, f64::min)
}
