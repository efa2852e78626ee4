//! Run configuration: defaults, a JSON config file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use comap_core::camera::DEFAULT_GATE_PX;
use comap_core::covis::DEFAULT_KERNEL_RADIUS;
use comap_core::enhance::{EnhanceParams, DEFAULT_STRIDE};
use comap_core::proximity::loss::DEFAULT_THRESHOLD;
use comap_core::proximity::train::{DEFAULT_ITERS, DEFAULT_LR};
use comap_core::proximity::DEFAULT_STEP;

/// Every tunable of every subcommand. Fields missing from a config file
/// take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scene directory holding the COLMAP text reconstruction.
    pub scene: Option<PathBuf>,
    /// Correspondence directory; defaults to `<scene>/corr`.
    pub corr_dir: Option<PathBuf>,
    /// Depth directory; defaults to `<scene>/depth`.
    pub depth_dir: Option<PathBuf>,
    /// Output directory.
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Worker threads; 0 or absent means hardware parallelism. Not part of
    /// reports since results do not depend on it.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,

    pub gate_px: f64,
    /// Merge distance; absent means half the median COLMAP nearest-neighbor spacing.
    pub epsilon: Option<f64>,
    /// Mono dedup radius; absent means epsilon.
    pub dedup_radius: Option<f64>,
    pub kernel_radius: u32,
    pub stride: u32,
    pub min_conf: f64,
    pub fit_offset: bool,

    /// Point cloud to train on (PLY); absent means running `enhance` in-line.
    pub points: Option<PathBuf>,
    /// Negatives per positive.
    pub ratio: f64,
    /// Negative exclusion radius; absent means 2% of the bounding-box diagonal.
    pub r_neg: Option<f64>,
    pub iters: usize,
    pub lr: f64,
    pub threshold: f64,

    /// Model file; defaults to `<out>/proximity.cmpx`.
    pub model: Option<PathBuf>,
    /// Gaussian positions (PLY).
    pub gaussians: Option<PathBuf>,
    /// View whose map supervises `eval-loss`; defaults to the first view.
    pub view: Option<u32>,
    /// Weight of D-SSIM against L1 in the photometric term.
    pub lambda: f64,
    pub l1: Option<f64>,
    pub dssim: Option<f64>,

    pub steps: usize,
    /// Descent step in normalized model coordinates.
    pub step: f64,
    pub init_points: usize,
    pub snapshot_every: usize,

    /// Synthetic scene description for `synth`.
    pub spec: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let enhance = EnhanceParams::default();
        Self {
            scene: None,
            corr_dir: None,
            depth_dir: None,
            out: None,
            seed: None,
            threads: None,
            gate_px: DEFAULT_GATE_PX,
            epsilon: None,
            dedup_radius: None,
            kernel_radius: DEFAULT_KERNEL_RADIUS,
            stride: DEFAULT_STRIDE,
            min_conf: enhance.min_conf,
            fit_offset: enhance.fit_offset,
            points: None,
            ratio: 1.0,
            r_neg: None,
            iters: DEFAULT_ITERS,
            lr: DEFAULT_LR,
            threshold: DEFAULT_THRESHOLD,
            model: None,
            gaussians: None,
            view: None,
            lambda: 0.2,
            l1: None,
            dssim: None,
            steps: 500,
            step: DEFAULT_STEP,
            init_points: 500,
            snapshot_every: 50,
            spec: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| invalid(format!("config {}: {e}", path.display())))
    }

    pub fn enhance_params(&self) -> EnhanceParams {
        EnhanceParams {
            gate_px: self.gate_px,
            epsilon: self.epsilon,
            dedup_radius: self.dedup_radius,
            stride: self.stride,
            min_conf: self.min_conf,
            fit_offset: self.fit_offset,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn out_dir(&self) -> Result<&Path> {
        match &self.out {
            Some(p) => Ok(p),
            None => Err(invalid("--out is required")),
        }
    }

    pub fn scene_dir(&self) -> Result<&Path> {
        match &self.scene {
            Some(p) => Ok(p),
            None => Err(invalid("--scene is required")),
        }
    }

    pub fn model_path(&self) -> Result<PathBuf> {
        match &self.model {
            Some(p) => Ok(p.clone()),
            None => Ok(self.out_dir()?.join(crate::commands::MODEL_FILE)),
        }
    }

    /// Checks documented parameter ranges.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.gate_px > 0.0 && self.gate_px.is_finite()) {
            bad.push(format!("gate_px must be positive, got {}", self.gate_px));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                bad.push(format!("epsilon must be positive, got {e}"));
            }
        }
        if let Some(r) = self.dedup_radius {
            if !(r >= 0.0 && r.is_finite()) {
                bad.push(format!("dedup_radius must be non-negative, got {r}"));
            }
        }
        if self.stride == 0 {
            bad.push("stride must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.min_conf) {
            bad.push(format!("min_conf must lie in [0, 1], got {}", self.min_conf));
        }
        if !(self.ratio >= 0.0 && self.ratio.is_finite()) {
            bad.push(format!("ratio must be non-negative, got {}", self.ratio));
        }
        if let Some(r) = self.r_neg {
            if !(r >= 0.0 && r.is_finite()) {
                bad.push(format!("r_neg must be non-negative, got {r}"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            bad.push(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            bad.push(format!("threshold must lie in [0, 1], got {}", self.threshold));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            bad.push(format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if !(self.step >= 0.0 && self.step.is_finite()) {
            bad.push(format!("step must be non-negative, got {}", self.step));
        }
        if self.snapshot_every == 0 {
            bad.push("snapshot_every must be at least 1".into());
        }
        if !bad.is_empty() {
            bail!(invalid(bad.join("; ")));
        }
        Ok(())
    }
}

/// An input or validation problem detected by the CLI itself.
#[derive(Debug)]
pub struct InvalidInput(pub String);

impl std::fmt::Display for InvalidInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidInput {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    InvalidInput(msg.into()).into()
}
