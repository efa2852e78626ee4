//! The subcommands. Each writes its artifacts plus `report.json` under the
//! output directory and returns the report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use comap_core::covis::{refine_covis_map, scene_covis_score, CovisMap, SceneCovisScore};
use comap_core::enhance::{build_scene_maps, enhance, EnhanceOutput};
use comap_core::io::{read_ply_positions, write_covis_map_image, write_json, write_ply};
use comap_core::proximity::loss::classify_cloud;
use comap_core::proximity::train::{accuracy, default_r_neg, make_training_set, train_classifier};
use comap_core::proximity::{descend, proximity_loss, total_objective, weight_out, ProximityModel};
use comap_core::spatial::KdTree;
use comap_core::synth::{self, distance_to_surfaces, generate_scene, GroundTruthRecord, Primitive, SceneSpec};
use comap_core::{load_scene, Error, PointCloud, SceneBundle, Source, Vec3};

use crate::config::{invalid, RunConfig};

pub const REPORT_FILE: &str = "report.json";
pub const MODEL_FILE: &str = "proximity.cmpx";
pub const MAPS_DIR: &str = "maps";

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg.out_dir()?.to_path_buf();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn write_report(out: &Path, command: &str, cfg: &RunConfig, result: Value) -> Result<Value> {
    let report = json!({ "command": command, "config": cfg, "result": result });
    write_json(&report, out.join(REPORT_FILE))?;
    Ok(report)
}

fn load(cfg: &RunConfig) -> Result<SceneBundle> {
    let bundle = load_scene(cfg.scene_dir()?, cfg.corr_dir.as_deref(), cfg.depth_dir.as_deref())?;
    info!(
        "stage=load views={} colmap_points={} depth_maps={} correspondence_sets={}",
        bundle.views.len(),
        bundle.colmap_points.len(),
        bundle.depth_maps.len(),
        bundle.correspondences.len()
    );
    Ok(bundle)
}

/// Refined maps and their scene score: the inputs of the proximity loss.
fn supervision_maps(bundle: &SceneBundle, cfg: &RunConfig) -> Result<(Vec<CovisMap>, SceneCovisScore)> {
    let maps: Vec<CovisMap> = build_scene_maps(bundle, cfg.min_conf)?
        .iter()
        .map(|m| refine_covis_map(m, cfg.kernel_radius))
        .collect();
    let score = scene_covis_score(&maps)?;
    Ok((maps, score))
}

fn view_file(prefix: &str, view_id: u32, ext: &str) -> String {
    format!("{prefix}view_{view_id:04}.{ext}")
}

/// The cloud the classifier is trained on: `points` if given, otherwise
/// the output of the enhancement stage.
fn reference_cloud(cfg: &RunConfig) -> Result<PointCloud> {
    match &cfg.points {
        Some(path) => Ok(comap_core::io::read_ply(path)?),
        None => Ok(enhance(&load(cfg)?, &cfg.enhance_params())?.p_final),
    }
}

fn write_csv(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn comap(cfg: &RunConfig) -> Result<Value> {
    let out = prepare_out(cfg)?;
    let bundle = load(cfg)?;
    let raw = build_scene_maps(&bundle, cfg.min_conf)?;
    let raw_score = scene_covis_score(&raw)?;
    let (maps, score) = supervision_maps(&bundle, cfg)?;
    let dir = out.join(MAPS_DIR);
    fs::create_dir_all(&dir)?;
    let mut per_view = Vec::new();
    for m in &maps {
        write_covis_map_image(m, dir.join(view_file("", m.view_id, "pgm")), dir.join(view_file("vis_", m.view_id, "pgm")))?;
        per_view.push(json!({
            "view_id": m.view_id,
            "mean": m.normalized_mean(),
            "max_count": m.max_count(),
            "mono_fraction": m.counts().iter().filter(|&&c| c == 0).count() as f64 / m.counts().len() as f64,
        }));
    }
    info!("stage=comap views={} S={} S_unrefined={}", maps.len(), score.score, raw_score.score);
    write_report(
        &out,
        "comap",
        cfg,
        json!({ "S": score.score, "S_unrefined": raw_score.score, "per_view_means": score.per_view_means, "views": per_view }),
    )
}

fn write_enhance_outputs(out: &Path, result: &EnhanceOutput) -> Result<()> {
    write_ply(&result.p_t, out.join("p_t.ply"), true)?;
    write_ply(&result.p_u, out.join("p_u.ply"), true)?;
    write_ply(&result.p_u_low, out.join("p_u_low.ply"), true)?;
    write_ply(&result.p_final, out.join("p_final.ply"), true)?;
    let dir = out.join("p_s_high");
    fs::create_dir_all(&dir)?;
    for (id, cloud) in &result.p_s_high {
        write_ply(cloud, dir.join(view_file("", *id, "ply")), true)?;
    }
    Ok(())
}

pub fn enhance_cmd(cfg: &RunConfig) -> Result<Value> {
    let out = prepare_out(cfg)?;
    let bundle = load(cfg)?;
    let result = enhance(&bundle, &cfg.enhance_params())?;
    write_enhance_outputs(&out, &result)?;
    let s = &result.stats;
    info!(
        "stage=enhance colmap={} triangulated={} p_u={} p_u_low={} p_final={} mono={}",
        s.colmap, s.triangulated, s.merged, s.merged_low, s.final_points, s.final_mono
    );
    let resolved = RunConfig { epsilon: Some(s.epsilon), dedup_radius: Some(s.dedup_radius), ..cfg.clone() };
    let low_mono = result.p_u_low.count_source(Source::Mono);
    write_report(
        &out,
        "enhance",
        &resolved,
        json!({
            "P_C": s.colmap,
            "P_T": s.triangulated,
            "P_u": s.merged,
            "P_u_low": s.merged_low,
            "P_u_low_mono": low_mono,
            "P_final": s.final_points,
            "P_final_mono": s.final_mono,
            "stats": s,
        }),
    )
}

pub fn train_proximity(cfg: &RunConfig) -> Result<Value> {
    let out = prepare_out(cfg)?;
    let p_final = reference_cloud(cfg)?;
    let seed = cfg.seed();
    let r_neg = cfg.r_neg.unwrap_or_else(|| default_r_neg(&p_final));
    let ts = make_training_set(&p_final, cfg.ratio, Some(r_neg), seed)?;
    info!("stage=train positives={} negatives={} r_neg={r_neg} iters={} lr={}", ts.positives.len(), ts.negatives.len(), cfg.iters, cfg.lr);
    let outcome = train_classifier(&ts, cfg.iters, cfg.lr, seed)?;
    let model_path = cfg.model_path()?;
    outcome.model.save(&model_path)?;

    let mut csv = String::from("iteration,loss\n");
    for (i, l) in outcome.curve.iter().enumerate() {
        writeln!(csv, "{i},{l}").unwrap();
    }
    write_csv(&out.join("train_curve.csv"), &csv)?;

    let class = classify_cloud(&outcome.model, &p_final, cfg.threshold);
    write_ply(&class.colored(&p_final), out.join("classification.ply"), true)?;
    let train_acc = accuracy(&outcome.model, &ts.positives, &ts.negatives, cfg.threshold);
    // Fresh negatives from an independent stream.
    let held = make_training_set(&p_final, cfg.ratio, Some(r_neg), seed.wrapping_add(1))?;
    let held_acc = (!held.negatives.is_empty()).then(|| accuracy(&outcome.model, &[], &held.negatives, cfg.threshold));
    info!(
        "stage=train initial_loss={} final_loss={} train_accuracy={train_acc} heldout_negative_accuracy={held_acc:?}",
        outcome.curve[0], outcome.model.meta.final_loss
    );
    let resolved = RunConfig { seed: Some(seed), r_neg: Some(r_neg), model: Some(model_path.clone()), ..cfg.clone() };
    write_report(
        &out,
        "train-proximity",
        &resolved,
        json!({
            "model": model_path,
            "positives": ts.positives.len(),
            "negatives": ts.negatives.len(),
            "initial_loss": outcome.curve[0],
            "final_loss": outcome.model.meta.final_loss,
            "train_accuracy": train_acc,
            "heldout_negative_accuracy": held_acc,
            "near_fraction": class.near_fraction(),
        }),
    )
}

fn load_gaussians(cfg: &RunConfig) -> Result<Vec<Vec3>> {
    match &cfg.gaussians {
        Some(path) => Ok(read_ply_positions(path)?),
        None => Ok(reference_cloud(cfg)?.positions()),
    }
}

fn view_index(bundle: &SceneBundle, id: u32) -> Result<usize> {
    bundle.views.iter().position(|v| v.view_id == id).ok_or_else(|| Error::UnknownView(id).into())
}

pub fn eval_loss(cfg: &RunConfig) -> Result<Value> {
    let out = prepare_out(cfg)?;
    let model_path = cfg.model_path()?;
    let model = ProximityModel::load(&model_path)?;
    let gaussians = load_gaussians(cfg)?;
    let bundle = load(cfg)?;
    let view_id = cfg.view.unwrap_or(bundle.views[0].view_id);
    let idx = view_index(&bundle, view_id)?;
    let (maps, score) = supervision_maps(&bundle, cfg)?;
    let eval = proximity_loss(&model, &gaussians, &bundle.views[idx], &maps[idx], &score)?;

    let mut csv = String::from("index,chi,weight,s,contribution\n");
    for (i, t) in eval.terms.iter().enumerate() {
        writeln!(csv, "{i},{},{},{},{}", t.in_frustum as u8, t.weight, t.score, t.contribution()).unwrap();
    }
    write_csv(&out.join(view_file("loss_", view_id, "csv")), &csv)?;
    let n = gaussians.len() as f64;
    let in_frustum = eval.terms.iter().filter(|t| t.in_frustum).count();
    let mean_far = eval.terms.iter().map(|t| 1.0 - t.score).sum::<f64>() / n;
    let objective = match (cfg.l1, cfg.dssim) {
        (Some(l1), Some(dssim)) => Some(total_objective(l1, dssim, cfg.lambda, eval.loss)?),
        _ => None,
    };
    info!("stage=eval_loss view={view_id} gaussians={} in_frustum={in_frustum} L_p={}", gaussians.len(), eval.loss);
    println!("{}", eval.loss);
    let resolved = RunConfig { view: Some(view_id), model: Some(model_path), ..cfg.clone() };
    write_report(
        &out,
        "eval-loss",
        &resolved,
        json!({
            "view_id": view_id,
            "gaussians": gaussians.len(),
            "in_frustum": in_frustum,
            "L_p": eval.loss,
            "mean_one_minus_s": mean_far,
            "S": score.score,
            "w_out": weight_out(&score),
            "objective": objective,
        }),
    )
}

/// Distance from a point to the scene: exact surfaces for synthetic scenes,
/// nearest reference point otherwise.
enum DistanceReference {
    Surfaces(Vec<Primitive>),
    Points(KdTree),
}

impl DistanceReference {
    fn for_scene(cfg: &RunConfig) -> Result<Self> {
        let gt = cfg.scene_dir()?.join(synth::GROUND_TRUTH_FILE);
        if gt.exists() {
            let record: GroundTruthRecord = serde_json::from_str(&fs::read_to_string(&gt)?)?;
            return Ok(Self::Surfaces(record.spec.surfaces));
        }
        Ok(Self::Points(KdTree::new(reference_cloud(cfg)?.positions())))
    }

    fn name(&self) -> &'static str {
        match self {
            Self::Surfaces(_) => "surfaces",
            Self::Points(_) => "points",
        }
    }

    fn mean_distance(&self, points: &[Vec3]) -> f64 {
        let d: f64 = match self {
            Self::Surfaces(s) => points.iter().map(|p| distance_to_surfaces(s, p)).sum(),
            Self::Points(t) => points.iter().map(|p| t.nearest(p).map_or(0.0, |(_, d)| d)).sum(),
        };
        d / points.len() as f64
    }
}

pub fn optimize_demo(cfg: &RunConfig) -> Result<Value> {
    let out = prepare_out(cfg)?;
    let model_path = cfg.model_path()?;
    let model = ProximityModel::load(&model_path)?;
    let bundle = load(cfg)?;
    let (maps, score) = supervision_maps(&bundle, cfg)?;
    let seed = cfg.seed();
    let init = match &cfg.gaussians {
        Some(path) => read_ply_positions(path)?,
        None => {
            // Uniform in the cube the model normalizes to [-1, 1]³.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (c, s) = (model.normalization.center, model.normalization.scale);
            (0..cfg.init_points)
                .map(|_| c + Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s)))
                .collect()
        }
    };
    if init.is_empty() {
        return Err(Error::EmptyInput("no Gaussians to optimize".into()).into());
    }
    let reference = DistanceReference::for_scene(cfg)?;
    let traj = out.join("trajectory");
    fs::create_dir_all(&traj)?;
    let mut csv = String::from("step,mean_distance\n");
    let steps = cfg.steps;
    let final_positions = descend(&model, &init, &bundle.views, &maps, &score, steps, cfg.step, |k, pos| {
        writeln!(csv, "{k},{}", reference.mean_distance(pos)).unwrap();
        if k % cfg.snapshot_every == 0 || k == steps {
            // Snapshots carry the default source tag; it has no meaning here.
            let cloud = PointCloud::from_positions(pos.iter().copied(), Source::Colmap);
            write_ply(&cloud, traj.join(format!("step_{k:05}.ply")), true)?;
        }
        Ok(())
    })?;
    write_csv(&out.join("convergence.csv"), &csv)?;
    let d0 = reference.mean_distance(&init);
    let d1 = reference.mean_distance(&final_positions);
    let displacement = init.iter().zip(&final_positions).map(|(a, b)| (a - b).norm()).sum::<f64>() / init.len() as f64;
    let reduction = if d0 > 0.0 { 1.0 - d1 / d0 } else { 0.0 };
    info!("stage=optimize steps={steps} initial_distance={d0} final_distance={d1} reduction={reduction}");
    if score.score <= 0.7 {
        warn!("stage=optimize S={} out_of_frustum_weight=0", score.score);
    }
    let resolved = RunConfig { seed: Some(seed), model: Some(model_path), ..cfg.clone() };
    write_report(
        &out,
        "optimize-demo",
        &resolved,
        json!({
            "gaussians": init.len(),
            "steps": steps,
            "world_step": cfg.step * model.normalization.scale,
            "distance_reference": reference.name(),
            "initial_mean_distance": d0,
            "final_mean_distance": d1,
            "reduction": reduction,
            "mean_displacement": displacement,
            "S": score.score,
        }),
    )
}

pub fn synth_cmd(cfg: &RunConfig) -> Result<Value> {
    let spec_path = cfg.spec.as_ref().ok_or_else(|| invalid("--spec is required"))?;
    let mut spec = SceneSpec::load(spec_path)?;
    if let Some(seed) = cfg.seed {
        spec.seed = seed;
    }
    let scene = generate_scene(&spec)?;
    let out = prepare_out(cfg)?;
    synth::write_generated_scene(&scene, &out)?;
    let matches: usize = scene.bundle.correspondences.iter().map(|s| s.len()).sum();
    info!(
        "stage=synth views={} colmap_points={} matches={matches}",
        scene.bundle.views.len(),
        scene.bundle.colmap_points.len()
    );
    let resolved = RunConfig { seed: Some(spec.seed), ..cfg.clone() };
    write_report(
        &out,
        "synth",
        &resolved,
        json!({
            "views": scene.bundle.views.len(),
            "colmap_points": scene.bundle.colmap_points.len(),
            "depth_maps": scene.bundle.depth_maps.len(),
            "matches": matches,
        }),
    )
}
