//! The 3→128→128→1 proximity classifier.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

pub const HIDDEN: usize = 128;
/// Layer widths, input first.
pub const LAYER_DIMS: [usize; 4] = [3, HIDDEN, HIDDEN, 1];
pub const MAGIC: &[u8; 5] = b"CMPX1";

// Points per block in batched evaluation.
const BLOCK: usize = 2048;

/// Affine map from world coordinates into the unit cube: `(p − center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub center: Vec3,
    pub scale: f64,
}

impl Normalization {
    pub fn identity() -> Self {
        Self { center: Vec3::zeros(), scale: 1.0 }
    }

    /// Maps the box `[lo, hi]` into `[−1, 1]³`, preserving aspect ratio.
    pub fn from_bounds(lo: Vec3, hi: Vec3) -> Self {
        let half = 0.5 * (hi - lo).max();
        Self { center: 0.5 * (lo + hi), scale: if half > 0.0 { half } else { 1.0 } }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        (p - self.center) / self.scale
    }

    pub fn invert(&self, q: &Vec3) -> Vec3 {
        q * self.scale + self.center
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub iterations: u64,
    pub learning_rate: f64,
    pub seed: u64,
    pub final_loss: f64,
}

/// One fully connected layer, `out = W·in + b` with `W` of shape `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    /// PyTorch-style default init: weights and biases uniform in `±1/√fan_in`.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        // Row-major draw order so the stream is independent of matrix storage.
        let mut weights = DMatrix::zeros(fan_out, fan_in);
        for r in 0..fan_out {
            for c in 0..fan_in {
                weights[(r, c)] = rng.random_range(-bound..bound);
            }
        }
        let bias = DVector::from_fn(fan_out, |_, _| rng.random_range(-bound..bound));
        Self { weights, bias }
    }

    fn round_to_f32(&mut self) {
        self.weights.apply(|w| *w = *w as f32 as f64);
        self.bias.apply(|b| *b = *b as f32 as f64);
    }

    /// `W·x + b·1ᵀ` for a column batch.
    fn affine(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.weights * x;
        for mut col in z.column_iter_mut() {
            col += &self.bias;
        }
        z
    }
}

/// Proximity classifier `f_p`: two ReLU layers and a logistic output.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityModel {
    pub layers: [Layer; 3],
    pub normalization: Normalization,
    pub meta: TrainMeta,
}

/// Logistic function clamped to the open interval (0, 1).
pub fn sigmoid(z: f64) -> f64 {
    let s = if z >= 0.0 { 1.0 / (1.0 + (-z).exp()) } else { z.exp() / (1.0 + z.exp()) };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Intermediate values of a batched forward pass, one column per point.
pub(crate) struct Forward {
    pub x: DMatrix<f64>,
    pub z1: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub z2: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub logits: Vec<f64>,
}

fn relu(z: &DMatrix<f64>) -> DMatrix<f64> {
    z.map(|v| v.max(0.0))
}

impl ProximityModel {
    /// Freshly initialized model, seeded.
    pub fn init(normalization: Normalization, rng: &mut impl Rng) -> Self {
        let layers = [
            Layer::init(LAYER_DIMS[0], LAYER_DIMS[1], rng),
            Layer::init(LAYER_DIMS[1], LAYER_DIMS[2], rng),
            Layer::init(LAYER_DIMS[2], LAYER_DIMS[3], rng),
        ];
        Self {
            layers,
            normalization,
            meta: TrainMeta { iterations: 0, learning_rate: 0.0, seed: 0, final_loss: f64::NAN },
        }
    }

    /// Rounds every parameter to the nearest `f32` so the model survives
    /// serialization unchanged.
    pub fn round_to_f32(&mut self) {
        for l in &mut self.layers {
            l.round_to_f32();
        }
    }

    /// Forward pass over already-normalized inputs stored as columns.
    pub(crate) fn forward_normalized(&self, x: DMatrix<f64>) -> Forward {
        let z1 = self.layers[0].affine(&x);
        let a1 = relu(&z1);
        let z2 = self.layers[1].affine(&a1);
        let a2 = relu(&z2);
        let z3 = self.layers[2].affine(&a2);
        let logits = z3.row(0).iter().copied().collect();
        Forward { x, z1, a1, z2, a2, logits }
    }

    fn normalized_columns(&self, points: &[Vec3]) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(3, points.len());
        for (j, p) in points.iter().enumerate() {
            x.set_column(j, &self.normalization.apply(p));
        }
        x
    }

    /// Pre-sigmoid output for one world point.
    pub fn logit(&self, p: &Vec3) -> f64 {
        let q = self.normalization.apply(p);
        let [l1, l2, l3] = &self.layers;
        let mut h1 = [0.0; HIDDEN];
        for (r, h) in h1.iter_mut().enumerate() {
            let z = l1.bias[r] + l1.weights[(r, 0)] * q.x + l1.weights[(r, 1)] * q.y + l1.weights[(r, 2)] * q.z;
            *h = z.max(0.0);
        }
        let mut out = l3.bias[0];
        for r in 0..HIDDEN {
            let mut z = l2.bias[r];
            for (c, h) in h1.iter().enumerate() {
                z += l2.weights[(r, c)] * h;
            }
            out += l3.weights[(0, r)] * z.max(0.0);
        }
        out
    }

    /// Proximity score `s ∈ (0, 1)` of one world point.
    pub fn score(&self, p: &Vec3) -> f64 {
        sigmoid(self.logit(p))
    }

    /// Scores of many points, evaluated in blocks in parallel; order follows the input.
    pub fn score_batch(&self, points: &[Vec3]) -> Vec<f64> {
        points
            .par_chunks(BLOCK)
            .flat_map_iter(|chunk| {
                self.forward_normalized(self.normalized_columns(chunk)).logits.into_iter().map(sigmoid)
            })
            .collect()
    }

    /// Scores and world-space gradients `∂s/∂p`, in input order.
    pub fn score_and_grad_batch(&self, points: &[Vec3]) -> Vec<(f64, Vec3)> {
        points
            .par_chunks(BLOCK)
            .flat_map_iter(|chunk| {
                let fwd = self.forward_normalized(self.normalized_columns(chunk));
                let grads = self.input_gradients(&fwd);
                fwd.logits.iter().map(|&z| sigmoid(z)).zip(grads).collect::<Vec<_>>()
            })
            .collect()
    }

    /// `∂s/∂p` for each column of a forward pass, in world units.
    fn input_gradients(&self, fwd: &Forward) -> Vec<Vec3> {
        let [l1, l2, l3] = &self.layers;
        let n = fwd.logits.len();
        // δ2 = w3 ⊙ 1[z2 > 0], δ1 = (W2ᵀ δ2) ⊙ 1[z1 > 0], ∂z3/∂x = W1ᵀ δ1.
        let mut d2 = DMatrix::zeros(HIDDEN, n);
        for j in 0..n {
            for r in 0..HIDDEN {
                if fwd.z2[(r, j)] > 0.0 {
                    d2[(r, j)] = l3.weights[(0, r)];
                }
            }
        }
        let mut d1 = l2.weights.transpose() * d2;
        d1.zip_apply(&fwd.z1, |d, z| {
            if z <= 0.0 {
                *d = 0.0
            }
        });
        let dx = l1.weights.transpose() * d1;
        fwd.logits
            .iter()
            .enumerate()
            .map(|(j, &z)| {
                let e = (-z.abs()).exp();
                let ds = e / ((1.0 + e) * (1.0 + e));
                Vec3::new(dx[(0, j)], dx[(1, j)], dx[(2, j)]) * (ds / self.normalization.scale)
            })
            .collect()
    }

    /// Which hidden units are active at `p`, first layer then second.
    pub fn relu_pattern(&self, p: &Vec3) -> Vec<bool> {
        let fwd = self.forward_normalized(self.normalized_columns(std::slice::from_ref(p)));
        fwd.z1.iter().chain(fwd.z2.iter()).map(|&z| z > 0.0).collect()
    }

    /// Writes the `CMPX1` little-endian binary format.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(LAYER_DIMS.len() as u32).to_le_bytes())?;
        for d in LAYER_DIMS {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for l in &self.layers {
            for r in 0..l.weights.nrows() {
                for c in 0..l.weights.ncols() {
                    w.write_all(&(l.weights[(r, c)] as f32).to_le_bytes())?;
                }
            }
            for b in l.bias.iter() {
                w.write_all(&(*b as f32).to_le_bytes())?;
            }
        }
        let n = &self.normalization;
        for v in [n.center.x, n.center.y, n.center.z, n.scale] {
            w.write_all(&v.to_le_bytes())?;
        }
        let m = &self.meta;
        w.write_all(&m.iterations.to_le_bytes())?;
        w.write_all(&m.learning_rate.to_le_bytes())?;
        w.write_all(&m.seed.to_le_bytes())?;
        w.write_all(&m.final_loss.to_le_bytes())?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(mut data: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::InvalidModel(m.to_string());
        let mut magic = [0u8; 5];
        read_exact(&mut data, &mut magic)?;
        if &magic != MAGIC {
            return Err(bad("missing CMPX1 magic"));
        }
        let n_dims = read_u32(&mut data)? as usize;
        if n_dims != LAYER_DIMS.len() {
            return Err(bad("unexpected layer count"));
        }
        for d in LAYER_DIMS {
            if read_u32(&mut data)? as usize != d {
                return Err(bad("unexpected layer dimensions"));
            }
        }
        let mut layers = Vec::with_capacity(3);
        for k in 0..3 {
            let (fan_in, fan_out) = (LAYER_DIMS[k], LAYER_DIMS[k + 1]);
            let mut weights = DMatrix::zeros(fan_out, fan_in);
            for r in 0..fan_out {
                for c in 0..fan_in {
                    weights[(r, c)] = read_f32(&mut data)? as f64;
                }
            }
            let mut bias = DVector::zeros(fan_out);
            for b in bias.iter_mut() {
                *b = read_f32(&mut data)? as f64;
            }
            layers.push(Layer { weights, bias });
        }
        let center = Vec3::new(read_f64(&mut data)?, read_f64(&mut data)?, read_f64(&mut data)?);
        let scale = read_f64(&mut data)?;
        if !(scale > 0.0) || !scale.is_finite() || !center.iter().all(|v| v.is_finite()) {
            return Err(bad("invalid normalization"));
        }
        let meta = TrainMeta {
            iterations: read_u64(&mut data)?,
            learning_rate: read_f64(&mut data)?,
            seed: read_u64(&mut data)?,
            final_loss: read_f64(&mut data)?,
        };
        if !data.is_empty() {
            return Err(bad("trailing bytes after model"));
        }
        if layers.iter().any(|l| !l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite())) {
            return Err(bad("non-finite parameter"));
        }
        let layers: [Layer; 3] = layers.try_into().expect("three layers read");
        Ok(Self { layers, normalization: Normalization { center, scale }, meta })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn read_exact(data: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    data.read_exact(buf).map_err(|_| Error::InvalidModel("truncated model file".into()))
}

fn read_u32(data: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(data, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32(data: &mut &[u8]) -> Result<f32> {
    let mut b = [0u8; 4];
    read_exact(data, &mut b)?;
    Ok(f32::from_le_bytes(b))
}

fn read_u64(data: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(data, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(data: &mut &[u8]) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(data, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64) -> ProximityModel {
        let mut m = ProximityModel::init(
            Normalization { center: Vec3::new(0.1, -0.2, 0.3), scale: 2.0 },
            &mut ChaCha8Rng::seed_from_u64(seed),
        );
        m.round_to_f32();
        m
    }

    fn points(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
            .collect()
    }

    #[test]
    fn untrained_outputs_are_near_half() {
        let m = model(0);
        for s in m.score_batch(&points(2000, 1)) {
            assert!(s > 0.3 && s < 0.7, "{s}");
        }
    }

    #[test]
    fn batch_matches_single_point() {
        let m = model(2);
        let pts = points(3000, 3);
        for (p, s) in pts.iter().zip(m.score_batch(&pts)) {
            assert!((m.score(p) - s).abs() <= 1e-12);
        }
    }

    #[test]
    fn sigmoid_stays_open() {
        for z in [-1e6, -800.0, -40.0, 0.0, 40.0, 800.0, 1e6] {
            let s = sigmoid(z);
            assert!(s > 0.0 && s < 1.0, "{z} -> {s}");
        }
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let m = model(4);
        let pts = points(200, 5);
        let h = 1e-5;
        let mut checked = 0;
        for (p, (_, g)) in pts.iter().zip(m.score_and_grad_batch(&pts)) {
            let pattern = m.relu_pattern(p);
            let mut fd = Vec3::zeros();
            let mut smooth = true;
            for a in 0..3 {
                let mut e = Vec3::zeros();
                e[a] = h;
                smooth &= m.relu_pattern(&(p + e)) == pattern && m.relu_pattern(&(p - e)) == pattern;
                fd[a] = (m.score(&(p + e)) - m.score(&(p - e))) / (2.0 * h);
            }
            if smooth {
                checked += 1;
                assert!((fd - g).norm() <= 1e-6 * g.norm().max(1e-8), "{fd} vs {g}");
            }
        }
        assert!(checked > 150);
    }

    #[test]
    fn serialization_round_trips_exactly() {
        let mut m = model(6);
        m.meta = TrainMeta { iterations: 12, learning_rate: 1e-3, seed: 99, final_loss: 0.25 };
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..5], MAGIC);
        let back = ProximityModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);
        for cut in [0, 4, 5, 20, bytes.len() - 1] {
            assert!(matches!(ProximityModel::from_bytes(&bytes[..cut]), Err(Error::InvalidModel(_))));
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(ProximityModel::from_bytes(&extra).is_err());
        let mut wrong = bytes;
        wrong[9] = 4;
        assert!(ProximityModel::from_bytes(&wrong).is_err());
    }
}
