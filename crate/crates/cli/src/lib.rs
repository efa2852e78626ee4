//! Library side of the `comap` command-line tool: configuration handling,
//! the subcommands and the exit-code policy.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use comap_core::Error;

pub use config::{InvalidInput, RunConfig};

/// Exit codes: 0 success, 2 input or validation error, 3 numeric failure,
/// 4 I/O failure.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io(_) | Error::MissingFile(_) => 4,
                Error::NonFiniteLoss(_)
                | Error::NonPositiveScale(_)
                | Error::DegenerateGeometry
                | Error::SamplingStarvation { .. } => 3,
                _ => 2,
            };
        }
        if cause.is::<InvalidInput>() || cause.is::<serde_json::Error>() {
            return 2;
        }
        if cause.is::<std::io::Error>() {
            return 4;
        }
    }
    2
}

#[derive(Debug, Parser)]
#[command(name = "comap", version, about = "Covisibility maps, point-cloud enhancement and proximity supervision")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build per-view covisibility maps and the scene covisibility score.
    Comap {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        maps: MapArgs,
    },
    /// Triangulate, merge, rescale mono depth and assemble the final cloud.
    Enhance {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        maps: MapArgs,
        #[command(flatten)]
        enhance: EnhanceArgs,
    },
    /// Train the proximity classifier on the enhanced cloud.
    TrainProximity {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        maps: MapArgs,
        #[command(flatten)]
        enhance: EnhanceArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Evaluate the proximity loss of a set of Gaussians against one view.
    EvalLoss {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        maps: MapArgs,
        #[command(flatten)]
        enhance: EnhanceArgs,
        #[command(flatten)]
        loss: LossArgs,
        /// View whose covisibility map weights the loss [default: first view]
        #[arg(long)]
        view: Option<u32>,
        /// L1 photometric loss, to report the total objective
        #[arg(long, allow_negative_numbers = true)]
        l1: Option<f64>,
        /// D-SSIM loss, to report the total objective
        #[arg(long, allow_negative_numbers = true)]
        dssim: Option<f64>,
    },
    /// Move Gaussians by gradient descent on the proximity loss alone.
    OptimizeDemo {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        maps: MapArgs,
        #[command(flatten)]
        enhance: EnhanceArgs,
        #[command(flatten)]
        loss: LossArgs,
        /// Number of descent steps [default: 500]
        #[arg(long)]
        steps: Option<usize>,
        /// Step length in normalized model coordinates [default: 0.01]
        #[arg(long, allow_negative_numbers = true)]
        step: Option<f64>,
        /// Random initial points when --gaussians is absent [default: 500]
        #[arg(long)]
        init_points: Option<usize>,
        /// Write a trajectory snapshot every this many steps [default: 50]
        #[arg(long)]
        snapshot_every: Option<usize>,
    },
    /// Generate a synthetic scene with ground truth.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Scene description JSON
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

/// Flags shared by every subcommand. Flags override the config file.
#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scene directory (COLMAP text files, depth/, corr/)
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random seed [default: 0; for synth, the scene description's seed]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads [default: hardware parallelism]
    #[arg(long)]
    pub threads: Option<usize>,
    /// Reprojection gate in pixels [default: 2]
    #[arg(long, allow_negative_numbers = true)]
    pub gate_px: Option<f64>,
    /// Merge distance [default: half the median COLMAP spacing]
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    /// D-SSIM weight in the photometric term [default: 0.2]
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// Correspondence directory [default: <scene>/corr]
    #[arg(long)]
    pub corr_dir: Option<PathBuf>,
    /// Minimum match confidence [default: 0]
    #[arg(long, allow_negative_numbers = true)]
    pub min_conf: Option<f64>,
    /// Radius of the refinement window [default: 1]
    #[arg(long)]
    pub kernel_radius: Option<u32>,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    /// Depth directory [default: <scene>/depth]
    #[arg(long)]
    pub depth_dir: Option<PathBuf>,
    /// Mono dedup radius [default: epsilon]
    #[arg(long, allow_negative_numbers = true)]
    pub dedup_radius: Option<f64>,
    /// Pixel stride of depth unprojection [default: 4]
    #[arg(long)]
    pub stride: Option<u32>,
    /// Enhanced cloud PLY to use instead of running enhancement
    #[arg(long)]
    pub points: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Negatives per positive [default: 1]
    #[arg(long, allow_negative_numbers = true)]
    pub ratio: Option<f64>,
    /// Negative exclusion radius [default: 2% of the bounding-box diagonal]
    #[arg(long, allow_negative_numbers = true)]
    pub r_neg: Option<f64>,
    /// Training iterations [default: 1000]
    #[arg(long)]
    pub iters: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long, allow_negative_numbers = true)]
    pub lr: Option<f64>,
    /// Model output path [default: <out>/proximity.cmpx]
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Near/far threshold of the classification export [default: 0.5]
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Trained model [default: <out>/proximity.cmpx]
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Gaussian positions PLY [default: the enhanced cloud]
    #[arg(long)]
    pub gaussians: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

impl Common {
    fn apply(&self, cfg: &mut RunConfig) {
        set_opt(&mut cfg.scene, self.scene.clone());
        set_opt(&mut cfg.out, self.out.clone());
        set_opt(&mut cfg.seed, self.seed);
        set_opt(&mut cfg.threads, self.threads);
        set(&mut cfg.gate_px, self.gate_px);
        set_opt(&mut cfg.epsilon, self.epsilon);
        set(&mut cfg.lambda, self.lambda);
    }
}

impl MapArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set_opt(&mut cfg.corr_dir, self.corr_dir.clone());
        set(&mut cfg.min_conf, self.min_conf);
        set(&mut cfg.kernel_radius, self.kernel_radius);
    }
}

impl EnhanceArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set_opt(&mut cfg.depth_dir, self.depth_dir.clone());
        set_opt(&mut cfg.dedup_radius, self.dedup_radius);
        set(&mut cfg.stride, self.stride);
        set_opt(&mut cfg.points, self.points.clone());
    }
}

impl TrainArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.ratio, self.ratio);
        set_opt(&mut cfg.r_neg, self.r_neg);
        set(&mut cfg.iters, self.iters);
        set(&mut cfg.lr, self.lr);
        set_opt(&mut cfg.model, self.model.clone());
        set(&mut cfg.threshold, self.threshold);
    }
}

impl LossArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set_opt(&mut cfg.model, self.model.clone());
        set_opt(&mut cfg.gaussians, self.gaussians.clone());
    }
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Comap { common, .. }
            | Command::Enhance { common, .. }
            | Command::TrainProximity { common, .. }
            | Command::EvalLoss { common, .. }
            | Command::OptimizeDemo { common, .. }
            | Command::Synth { common, .. } => common,
        }
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve_config(&self) -> anyhow::Result<RunConfig> {
        let common = self.common();
        let mut cfg = match &common.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        common.apply(&mut cfg);
        match self {
            Command::Comap { maps, .. } => maps.apply(&mut cfg),
            Command::Enhance { maps, enhance, .. } => {
                maps.apply(&mut cfg);
                enhance.apply(&mut cfg);
            }
            Command::TrainProximity { maps, enhance, train, .. } => {
                maps.apply(&mut cfg);
                enhance.apply(&mut cfg);
                train.apply(&mut cfg);
            }
            Command::EvalLoss { maps, enhance, loss, view, l1, dssim, .. } => {
                maps.apply(&mut cfg);
                enhance.apply(&mut cfg);
                loss.apply(&mut cfg);
                set_opt(&mut cfg.view, *view);
                set_opt(&mut cfg.l1, *l1);
                set_opt(&mut cfg.dssim, *dssim);
            }
            Command::OptimizeDemo { maps, enhance, loss, steps, step, init_points, snapshot_every, .. } => {
                maps.apply(&mut cfg);
                enhance.apply(&mut cfg);
                loss.apply(&mut cfg);
                set(&mut cfg.steps, *steps);
                set(&mut cfg.step, *step);
                set(&mut cfg.init_points, *init_points);
                set(&mut cfg.snapshot_every, *snapshot_every);
            }
            Command::Synth { spec, .. } => set_opt(&mut cfg.spec, spec.clone()),
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn run(&self, cfg: &RunConfig) -> anyhow::Result<serde_json::Value> {
        match self {
            Command::Comap { .. } => commands::comap(cfg),
            Command::Enhance { .. } => commands::enhance_cmd(cfg),
            Command::TrainProximity { .. } => commands::train_proximity(cfg),
            Command::EvalLoss { .. } => commands::eval_loss(cfg),
            Command::OptimizeDemo { .. } => commands::optimize_demo(cfg),
            Command::Synth { .. } => commands::synth_cmd(cfg),
        }
    }
}
