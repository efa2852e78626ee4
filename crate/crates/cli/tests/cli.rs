use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use comap_core::io::{read_ply, write_ply};
use comap_core::{PointCloud, Source, Vec3};

fn scenes_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes")
}

fn comap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_comap")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = comap(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

/// A synthesized scene in a fresh temporary directory.
fn synth(name: &str) -> (TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    ok(&["synth", "--spec", s(&scenes_dir().join(format!("{name}.json"))), "--out", s(&scene)]);
    (tmp, scene)
}

/// Trains a quick model on `scene` and returns its path.
fn quick_model(root: &Path, scene: &Path) -> PathBuf {
    let out = root.join("train");
    ok(&["train-proximity", "--scene", s(scene), "--out", s(&out), "--iters", "30"]);
    out.join("proximity.cmpx")
}

#[test]
fn near_identical_views_give_full_covisibility() {
    let (tmp, scene) = synth("forward_plane");
    let out = tmp.path().join("maps");
    ok(&["comap", "--scene", s(&scene), "--out", s(&out)]);
    let r = report(&out);
    assert_eq!(r["command"], "comap");
    assert_eq!(r["result"]["S"], 1.0);
    assert!(out.join("maps/view_0000.pgm").exists());
    assert!(out.join("maps/vis_view_0000.pgm").exists());
}

#[test]
fn no_correspondences_give_zero_score() {
    let (tmp, scene) = synth("forward_plane");
    let empty = tmp.path().join("empty_corr");
    fs::create_dir_all(&empty).unwrap();
    let out = tmp.path().join("maps");
    ok(&["comap", "--scene", s(&scene), "--corr-dir", s(&empty), "--out", s(&out)]);
    assert_eq!(report(&out)["result"]["S"], 0.0);
}

#[test]
fn reruns_are_byte_identical() {
    let (tmp, scene) = synth("sphere_orbit");
    let out = tmp.path().join("enh");
    let read_all = |dir: &Path| -> Vec<(PathBuf, Vec<u8>)> {
        let mut files: Vec<_> = fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.is_file())
            .map(|p| (p.clone(), fs::read(&p).unwrap()))
            .collect();
        files.sort();
        files
    };
    ok(&["enhance", "--scene", s(&scene), "--out", s(&out), "--threads", "1"]);
    let first = read_all(&out);
    ok(&["enhance", "--scene", s(&scene), "--out", s(&out), "--threads", "2"]);
    assert_eq!(first, read_all(&out));
    assert!(first.iter().any(|(p, _)| p.ends_with("p_final.ply")));
}

#[test]
fn exit_codes_follow_error_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let missing = tmp.path().join("nowhere");
    assert_eq!(comap(&["comap", "--scene", s(&missing), "--out", s(&out)]).status.code(), Some(4));
    assert_eq!(comap(&["comap", "--out", s(&out)]).status.code(), Some(2));

    let (tmp2, scene) = synth("forward_plane");
    let bad = |flag: &str, value: &str| comap(&["enhance", "--scene", s(&scene), "--out", s(&out), flag, value]);
    assert_eq!(bad("--gate-px", "0").status.code(), Some(2));
    assert_eq!(bad("--epsilon", "-1").status.code(), Some(2));

    let cfg = tmp2.path().join("config.json");
    fs::write(&cfg, r#"{"gate_pixels": 2}"#).unwrap();
    assert_eq!(comap(&["comap", "--config", s(&cfg), "--scene", s(&scene), "--out", s(&out)]).status.code(), Some(2));
    fs::write(&cfg, r#"{"lambda": 1.5}"#).unwrap();
    assert_eq!(comap(&["comap", "--config", s(&cfg), "--scene", s(&scene), "--out", s(&out)]).status.code(), Some(2));
    // A flag fixes what the file got wrong.
    assert!(comap(&["comap", "--config", s(&cfg), "--lambda", "0.3", "--scene", s(&scene), "--out", s(&out)]).status.success());
    assert_eq!(report(&out)["config"]["lambda"], 0.3);
}

#[test]
fn eval_loss_csv_adds_up_to_the_loss() {
    let (tmp, scene) = synth("sphere_orbit");
    let model = quick_model(tmp.path(), &scene);
    let gaussians = tmp.path().join("g.ply");
    let cloud = PointCloud::from_positions(
        (0..40).map(|i| Vec3::new(-2.0 + 0.1 * i as f64, 0.3 * (i % 5) as f64 - 0.6, 0.05 * i as f64 - 1.0)),
        Source::Colmap,
    );
    write_ply(&cloud, &gaussians, false).unwrap();
    let out = tmp.path().join("loss");
    let run = ok(&[
        "eval-loss", "--scene", s(&scene), "--model", s(&model), "--gaussians", s(&gaussians), "--out", s(&out),
        "--view", "2", "--l1", "0.1", "--dssim", "0.3", "--lambda", "0.25",
    ]);
    let printed: f64 = String::from_utf8(run.stdout).unwrap().trim().parse().unwrap();
    let r = report(&out);
    let l_p = r["result"]["L_p"].as_f64().unwrap();
    assert_eq!(printed, l_p);

    let csv = fs::read_to_string(out.join("loss_view_0002.csv")).unwrap();
    let rows: Vec<Vec<f64>> =
        csv.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 40);
    let sum: f64 = rows.iter().map(|r| r[4]).sum();
    assert!((sum - l_p * 40.0).abs() < 1e-12);
    for r in &rows {
        assert!((r[4] - r[2] * (1.0 - r[3])).abs() < 1e-15);
    }
    let objective = r["result"]["objective"].as_f64().unwrap();
    assert!((objective - (0.75 * 0.1 + 0.25 * 0.3 + l_p)).abs() < 1e-12);
}

#[test]
fn empty_gaussians_are_rejected() {
    let (tmp, scene) = synth("sphere_orbit");
    let model = quick_model(tmp.path(), &scene);
    let empty = tmp.path().join("empty.ply");
    write_ply(&PointCloud::default(), &empty, true).unwrap();
    let out = tmp.path().join("o");
    for cmd in ["eval-loss", "optimize-demo"] {
        let r = comap(&[cmd, "--scene", s(&scene), "--model", s(&model), "--gaussians", s(&empty), "--out", s(&out)]);
        assert_eq!(r.status.code(), Some(2), "{cmd}");
    }
}

#[test]
fn zero_step_descent_returns_the_input() {
    let (tmp, scene) = synth("sphere_orbit");
    let model = quick_model(tmp.path(), &scene);
    let gaussians = tmp.path().join("g.ply");
    let cloud = PointCloud::from_positions((0..25).map(|i| Vec3::new(0.1 * i as f64, -0.5, 1.3)), Source::Colmap);
    write_ply(&cloud, &gaussians, true).unwrap();
    let out = tmp.path().join("opt");
    ok(&["optimize-demo", "--scene", s(&scene), "--model", s(&model), "--gaussians", s(&gaussians), "--out", s(&out), "--steps", "0"]);
    let snap = read_ply(out.join("trajectory/step_00000.ply")).unwrap();
    assert_eq!(snap.positions(), cloud.positions());
    let r = report(&out);
    assert_eq!(r["result"]["reduction"], 0.0);
    assert_eq!(r["result"]["distance_reference"], "surfaces");
    assert_eq!(fs::read_to_string(out.join("convergence.csv")).unwrap().lines().count(), 2);
}

#[test]
fn synth_seed_changes_noise_not_geometry() {
    let tmp = tempfile::tempdir().unwrap();
    let mut spec: Value = serde_json::from_str(&fs::read_to_string(scenes_dir().join("sphere_orbit.json")).unwrap()).unwrap();
    spec["match_noise_px"] = 0.5.into();
    let spec_path = tmp.path().join("spec.json");
    fs::write(&spec_path, spec.to_string()).unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    ok(&["synth", "--spec", s(&spec_path), "--out", s(&a)]);
    ok(&["synth", "--spec", s(&spec_path), "--out", s(&b), "--seed", "99"]);
    ok(&["synth", "--spec", s(&spec_path), "--out", s(&c)]);
    for f in ["cameras.txt", "images.txt", "points3D.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let corr = "corr/0000_0001.jsonl";
    assert_ne!(fs::read(a.join(corr)).unwrap(), fs::read(b.join(corr)).unwrap());
    assert_eq!(fs::read(a.join(corr)).unwrap(), fs::read(c.join(corr)).unwrap());
}
