//! Training data construction and full-batch Adam training.

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mlp::{Forward, Normalization, ProximityModel, TrainMeta, HIDDEN};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::spatial::KdTree;
use crate::Vec3;

pub const DEFAULT_ITERS: usize = 1000;
pub const DEFAULT_LR: f64 = 1e-3;
pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
/// Fraction of the bounding-box diagonal used as the default negative radius.
pub const DEFAULT_R_NEG_FRACTION: f64 = 0.02;
/// Per-side inflation of the positives' bounding box for negative sampling.
pub const BOX_INFLATION: f64 = 0.2;

// Rejection sampling gives up once this many attempts accepted under 1%.
const STARVATION_MIN_ATTEMPTS: usize = 10_000;
const STARVATION_RATE: f64 = 0.01;

/// Labeled points for the proximity classifier.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub positives: Vec<Vec3>,
    pub negatives: Vec<Vec3>,
    pub normalization: Normalization,
}

impl TrainingSet {
    pub fn new(positives: Vec<Vec3>, negatives: Vec<Vec3>, normalization: Normalization) -> Result<Self> {
        if positives.is_empty() {
            return Err(Error::EmptyInput("training set has no positives".into()));
        }
        if !positives.iter().chain(&negatives).all(|p| p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidParameter("training points must be finite".into()));
        }
        Ok(Self { positives, negatives, normalization })
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Negative sampling box: the positives' bounding box inflated by 20% per
/// side, with every half-extent at least `2·r_neg` so flat scenes still
/// leave room for negatives.
pub fn sampling_box(positives: &[Vec3], r_neg: f64) -> Option<(Vec3, Vec3)> {
    let first = positives.first()?;
    let (mut lo, mut hi) = (*first, *first);
    for p in positives {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let center = 0.5 * (lo + hi);
    let half = ((hi - lo) * (0.5 + BOX_INFLATION)).map(|h| h.max(2.0 * r_neg));
    Some((center - half, center + half))
}

/// 2% of the bounding-box diagonal of `cloud`.
pub fn default_r_neg(cloud: &PointCloud) -> f64 {
    cloud.bounds().map_or(0.0, |(lo, hi)| DEFAULT_R_NEG_FRACTION * (hi - lo).norm())
}

/// Samples `round(ratio·|P|)` negatives uniformly in [`sampling_box`],
/// keeping those at distance ≥ `r_neg` from every positive.
pub fn make_training_set(p_final: &PointCloud, ratio: f64, r_neg: Option<f64>, seed: u64) -> Result<TrainingSet> {
    if p_final.is_empty() {
        return Err(Error::EmptyInput("P_final is empty".into()));
    }
    if !(ratio >= 0.0) || !ratio.is_finite() {
        return Err(Error::InvalidParameter(format!("negative ratio must be non-negative, got {ratio}")));
    }
    let r_neg = r_neg.unwrap_or_else(|| default_r_neg(p_final));
    if !(r_neg >= 0.0) || !r_neg.is_finite() {
        return Err(Error::InvalidParameter(format!("r_neg must be non-negative, got {r_neg}")));
    }
    let positives = p_final.positions();
    let (lo, hi) = sampling_box(&positives, r_neg).expect("non-empty");
    let normalization = Normalization::from_bounds(lo, hi);
    let tree = KdTree::new(positives.clone());
    let wanted = (ratio * positives.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut negatives = Vec::with_capacity(wanted);
    let mut attempts = 0usize;
    while negatives.len() < wanted {
        attempts += 1;
        let q = Vec3::new(rng.random_range(lo.x..=hi.x), rng.random_range(lo.y..=hi.y), rng.random_range(lo.z..=hi.z));
        if tree.nearest(&q).is_some_and(|(_, d)| d >= r_neg) {
            negatives.push(q);
        }
        if attempts >= STARVATION_MIN_ATTEMPTS && (negatives.len() as f64) < STARVATION_RATE * attempts as f64 {
            return Err(Error::SamplingStarvation { accepted: negatives.len(), attempts });
        }
    }
    debug!("stage=negatives wanted={wanted} attempts={attempts} r_neg={r_neg}");
    TrainingSet::new(positives, negatives, normalization)
}

/// Mean binary cross-entropy from logits, in the numerically stable form.
pub fn bce_with_logits(logits: &[f64], labels: &[f64]) -> f64 {
    let n = logits.len() as f64;
    logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
        .sum::<f64>()
        / n
}

struct Adam {
    m: Vec<DMatrix<f64>>,
    v: Vec<DMatrix<f64>>,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(shapes: &[(usize, usize)], lr: f64) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| DMatrix::zeros(r, c)).collect();
        Self { m: zeros(), v: zeros(), t: 0, lr }
    }

    fn step(&mut self, params: &mut [&mut DMatrix<f64>], grads: &[DMatrix<f64>]) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t);
        let bc2 = 1.0 - BETA2.powi(self.t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..g.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let denom = (v[i] / bc2).sqrt() + ADAM_EPS;
                p[i] -= self.lr * (m[i] / bc1) / denom;
            }
        }
    }
}

fn as_column(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

/// Parameter gradients of the mean BCE for one full batch.
fn backward(model: &ProximityModel, fwd: &Forward, labels: &[f64]) -> Vec<DMatrix<f64>> {
    let n = labels.len();
    let inv_n = 1.0 / n as f64;
    let [_, l2, l3] = &model.layers;
    // dL/dz3, 1 × n.
    let dz3 = DMatrix::from_fn(1, n, |_, j| {
        let z = fwd.logits[j];
        let s = if z >= 0.0 { 1.0 / (1.0 + (-z).exp()) } else { z.exp() / (1.0 + z.exp()) };
        (s - labels[j]) * inv_n
    });
    let gw3 = &dz3 * fwd.a2.transpose();
    let gb3 = DMatrix::from_element(1, 1, dz3.sum());
    let mut dz2 = l3.weights.transpose() * &dz3;
    dz2.zip_apply(&fwd.z2, |d, z| {
        if z <= 0.0 {
            *d = 0.0
        }
    });
    let gw2 = &dz2 * fwd.a1.transpose();
    let gb2 = DMatrix::from_fn(HIDDEN, 1, |r, _| dz2.row(r).sum());
    let mut dz1 = l2.weights.transpose() * &dz2;
    dz1.zip_apply(&fwd.z1, |d, z| {
        if z <= 0.0 {
            *d = 0.0
        }
    });
    let gw1 = &dz1 * fwd.x.transpose();
    let gb1 = DMatrix::from_fn(HIDDEN, 1, |r, _| dz1.row(r).sum());
    vec![gw1, gb1, gw2, gb2, gw3, gb3]
}

/// Trained model plus the loss before every update and after the last one.
pub struct TrainOutcome {
    pub model: ProximityModel,
    pub curve: Vec<f64>,
}

/// Full-batch Adam on BCE; positives are labeled 1 and negatives 0.
/// Parameters are rounded to `f32` at the end.
pub fn train_classifier(ts: &TrainingSet, iters: usize, lr: f64, seed: u64) -> Result<TrainOutcome> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::InvalidParameter(format!("learning rate must be positive, got {lr}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ProximityModel::init(ts.normalization, &mut rng);
    let points: Vec<Vec3> = ts.positives.iter().chain(&ts.negatives).copied().collect();
    let labels: Vec<f64> = std::iter::repeat_n(1.0, ts.positives.len())
        .chain(std::iter::repeat_n(0.0, ts.negatives.len()))
        .collect();
    let mut x = DMatrix::zeros(3, points.len());
    for (j, p) in points.iter().enumerate() {
        x.set_column(j, &ts.normalization.apply(p));
    }

    // Biases are held as column matrices during training.
    let mut params: Vec<DMatrix<f64>> = model
        .layers
        .iter()
        .flat_map(|l| [l.weights.clone(), as_column(&l.bias)])
        .collect();
    let shapes: Vec<(usize, usize)> = params.iter().map(|p| p.shape()).collect();
    let mut adam = Adam::new(&shapes, lr);
    let mut curve = Vec::with_capacity(iters + 1);

    let sync = |model: &mut ProximityModel, params: &[DMatrix<f64>]| {
        for (k, l) in model.layers.iter_mut().enumerate() {
            l.weights.copy_from(&params[2 * k]);
            l.bias.copy_from(&params[2 * k + 1].column(0));
        }
    };

    for it in 0..=iters {
        let fwd = model.forward_normalized(x.clone());
        let loss = bce_with_logits(&fwd.logits, &labels);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss(it));
        }
        curve.push(loss);
        if it == iters {
            break;
        }
        let grads = backward(&model, &fwd, &labels);
        let mut refs: Vec<&mut DMatrix<f64>> = params.iter_mut().collect();
        adam.step(&mut refs, &grads);
        sync(&mut model, &params);
    }
    model.round_to_f32();
    let final_fwd = model.forward_normalized(x);
    let final_loss = bce_with_logits(&final_fwd.logits, &labels);
    model.meta = TrainMeta { iterations: iters as u64, learning_rate: lr, seed, final_loss };
    debug!("stage=train iters={iters} initial_loss={} final_loss={final_loss}", curve[0]);
    Ok(TrainOutcome { model, curve })
}

/// Fraction of points classified correctly at `threshold` (near iff `s ≥ threshold`).
pub fn accuracy(model: &ProximityModel, positives: &[Vec3], negatives: &[Vec3], threshold: f64) -> f64 {
    let pos = model.score_batch(positives).iter().filter(|&&s| s >= threshold).count();
    let neg = model.score_batch(negatives).iter().filter(|&&s| s < threshold).count();
    (pos + neg) as f64 / (positives.len() + negatives.len()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Source;

    fn sphere_points(n: usize, radius: f64, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                let v: Vec3 = Vec3::new(
                    rng.sample(rand_distr::StandardNormal),
                    rng.sample(rand_distr::StandardNormal),
                    rng.sample(rand_distr::StandardNormal),
                );
                v.normalize() * radius
            })
            .collect()
    }

    #[test]
    fn single_positive_negatives_respect_radius() {
        let cloud = PointCloud::from_positions([Vec3::zeros()], Source::Colmap);
        let ts = make_training_set(&cloud, 50.0, Some(1.0), 3).unwrap();
        assert_eq!(ts.negatives.len(), 50);
        assert!(ts.negatives.iter().all(|n| n.norm() >= 1.0));
        let again = make_training_set(&cloud, 50.0, Some(1.0), 3).unwrap();
        assert_eq!(again.negatives, ts.negatives);
    }

    #[test]
    fn negatives_checked_by_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pos = sphere_points(300, 1.0, &mut rng);
        let cloud = PointCloud::from_positions(pos.clone(), Source::Mono);
        let r = default_r_neg(&cloud);
        let ts = make_training_set(&cloud, 1.0, None, 7).unwrap();
        assert_eq!(ts.negatives.len(), ts.positives.len());
        for n in &ts.negatives {
            let d = pos.iter().map(|p| (p - n).norm()).fold(f64::INFINITY, f64::min);
            assert!(d >= r);
            let q = ts.normalization.apply(n);
            assert!(q.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn oversized_radius_starves() {
        // A dense grid filling its own bounding box leaves only slivers at the box corners.
        let grid: Vec<Vec3> = (0..1000)
            .map(|i| Vec3::new((i % 10) as f64, (i / 10 % 10) as f64, (i / 100) as f64) * 0.1)
            .collect();
        let cloud = PointCloud::from_positions(grid, Source::Colmap);
        assert!(matches!(
            make_training_set(&cloud, 1.0, Some(0.3), 0),
            Err(Error::SamplingStarvation { .. })
        ));
    }

    #[test]
    fn training_is_deterministic_and_descends() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pos = sphere_points(100, 1.0, &mut rng);
        let neg = sphere_points(100, 2.5, &mut rng);
        let ts = TrainingSet::new(pos, neg, Normalization { center: Vec3::zeros(), scale: 2.5 }).unwrap();
        let a = train_classifier(&ts, 60, DEFAULT_LR, 5).unwrap();
        let b = train_classifier(&ts, 60, DEFAULT_LR, 5).unwrap();
        assert_eq!(a.model.to_bytes(), b.model.to_bytes());
        assert_eq!(a.curve.len(), 61);
        assert!(a.curve[60] < a.curve[0]);
        let zero = train_classifier(&ts, 0, DEFAULT_LR, 5).unwrap();
        assert!(zero.model.score_batch(&ts.positives).iter().all(|&s| s > 0.3 && s < 0.7));
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pos = sphere_points(20, 1.0, &mut rng);
        let neg = sphere_points(20, 2.0, &mut rng);
        let norm = Normalization { center: Vec3::zeros(), scale: 2.0 };
        let model = ProximityModel::init(norm, &mut rng);
        let pts: Vec<Vec3> = pos.iter().chain(&neg).copied().collect();
        let labels: Vec<f64> = (0..40).map(|i| if i < 20 { 1.0 } else { 0.0 }).collect();
        let mut x = DMatrix::zeros(3, 40);
        for (j, p) in pts.iter().enumerate() {
            x.set_column(j, &norm.apply(p));
        }
        let loss = |m: &ProximityModel| bce_with_logits(&m.forward_normalized(x.clone()).logits, &labels);
        let grads = backward(&model, &model.forward_normalized(x.clone()), &labels);
        let h = 1e-6;
        for (k, idx) in [(0usize, 5usize), (1, 3), (2, 200), (3, 7), (4, 11), (5, 0)] {
            let mut plus = model.clone();
            let mut minus = model.clone();
            let layer = k / 2;
            if k % 2 == 0 {
                plus.layers[layer].weights[idx] += h;
                minus.layers[layer].weights[idx] -= h;
            } else {
                plus.layers[layer].bias[idx] += h;
                minus.layers[layer].bias[idx] -= h;
            }
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((fd - grads[k][idx]).abs() < 1e-7, "param {k}[{idx}]: {fd} vs {}", grads[k][idx]);
        }
    }
}
