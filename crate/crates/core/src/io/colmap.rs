//! COLMAP text reconstructions (`cameras.txt`, `images.txt`, `points3D.txt`).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use nalgebra::{Quaternion, UnitQuaternion};

use crate::camera::{CameraView, Intrinsics};
use crate::cloud::{Point, PointCloud, Source};
use crate::error::{Error, Result};
use crate::scene::SceneBundle;
use crate::Vec3;

#[derive(Debug, Clone, Copy)]
struct ColmapCamera {
    width: u32,
    height: u32,
    intrinsics: Intrinsics,
}

/// Reads a COLMAP text reconstruction. Views are keyed by `IMAGE_ID` and
/// returned in ascending id order; point order follows the file.
pub fn read_colmap_reconstruction(dir: impl AsRef<Path>) -> Result<SceneBundle> {
    let dir = dir.as_ref();
    let cameras = parse_cameras(&dir.join("cameras.txt"))?;
    let mut views = parse_images(&dir.join("images.txt"), &cameras)?;
    views.sort_by_key(|v| v.view_id);
    let (points, ids) = parse_points(&dir.join("points3D.txt"))?;
    if points.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{} holds no points",
            dir.join("points3D.txt").display()
        )));
    }
    let mut bundle = SceneBundle::new(views, points)?;
    bundle.colmap_point_ids = ids;
    Ok(bundle)
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, path: &Path, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| Error::malformed(path, line, format!("missing {what}")))?
        .parse()
        .map_err(|_| Error::malformed(path, line, format!("invalid {what}")))
}

fn parse_finite(tok: Option<&str>, path: &Path, line: usize, what: &str) -> Result<f64> {
    let v: f64 = parse_num(tok, path, line, what)?;
    if !v.is_finite() {
        return Err(Error::malformed(path, line, format!("non-finite {what}")));
    }
    Ok(v)
}

fn parse_cameras(path: &Path) -> Result<HashMap<u32, ColmapCamera>> {
    let text = read_text(path)?;
    let mut cameras = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let id: u32 = parse_num(toks.next(), path, line_no, "CAMERA_ID")?;
        let model = toks
            .next()
            .ok_or_else(|| Error::malformed(path, line_no, "missing MODEL"))?;
        let width: u32 = parse_num(toks.next(), path, line_no, "WIDTH")?;
        let height: u32 = parse_num(toks.next(), path, line_no, "HEIGHT")?;
        let params = toks
            .map(|t| parse_finite(Some(t), path, line_no, "camera parameter"))
            .collect::<Result<Vec<f64>>>()?;
        let intrinsics = match (model, params.as_slice()) {
            ("PINHOLE", &[fx, fy, cx, cy]) => Intrinsics::new(fx, fy, cx, cy),
            ("SIMPLE_PINHOLE", &[f, cx, cy]) => Intrinsics::new(f, f, cx, cy),
            ("SIMPLE_RADIAL", &[f, cx, cy, k]) => {
                if k != 0.0 {
                    warn!("camera={id} model=SIMPLE_RADIAL radial={k} action=ignored");
                }
                Intrinsics::new(f, f, cx, cy)
            }
            ("PINHOLE" | "SIMPLE_PINHOLE" | "SIMPLE_RADIAL", _) => {
                return Err(Error::malformed(
                    path,
                    line_no,
                    format!("{model} camera has {} parameters", params.len()),
                ))
            }
            _ => return Err(Error::UnsupportedCameraModel(model.to_string())),
        };
        if cameras
            .insert(id, ColmapCamera { width, height, intrinsics })
            .is_some()
        {
            return Err(Error::malformed(path, line_no, format!("duplicate camera id {id}")));
        }
    }
    Ok(cameras)
}

fn parse_images(path: &Path, cameras: &HashMap<u32, ColmapCamera>) -> Result<Vec<CameraView>> {
    let text = read_text(path)?;
    let mut views: Vec<CameraView> = Vec::new();
    let mut lines = text.lines().enumerate();
    while let Some((idx, raw)) = lines.next() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let image_id: u32 = parse_num(toks.next(), path, line_no, "IMAGE_ID")?;
        let mut q = [0.0; 4];
        for (slot, name) in q.iter_mut().zip(["QW", "QX", "QY", "QZ"]) {
            *slot = parse_finite(toks.next(), path, line_no, name)?;
        }
        let mut t = [0.0; 3];
        for (slot, name) in t.iter_mut().zip(["TX", "TY", "TZ"]) {
            *slot = parse_finite(toks.next(), path, line_no, name)?;
        }
        let camera_id: u32 = parse_num(toks.next(), path, line_no, "CAMERA_ID")?;
        if toks.next().is_none() {
            return Err(Error::malformed(path, line_no, "missing NAME"));
        }
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        if !(quat.norm() > 1e-12) {
            return Err(Error::malformed(path, line_no, "zero quaternion"));
        }
        let rotation = UnitQuaternion::from_quaternion(quat).to_rotation_matrix().into_inner();
        let cam = cameras
            .get(&camera_id)
            .ok_or_else(|| Error::malformed(path, line_no, format!("unknown camera id {camera_id}")))?;
        let view = CameraView::new(
            image_id,
            cam.intrinsics,
            rotation,
            Vec3::new(t[0], t[1], t[2]),
            cam.width,
            cam.height,
        )
        .map_err(|e| Error::malformed(path, line_no, e.to_string()))?;
        if views.iter().any(|v| v.view_id == image_id) {
            return Err(Error::malformed(path, line_no, format!("duplicate image id {image_id}")));
        }
        views.push(view);

        // The POINTS2D line follows every image line and may be empty.
        let (idx2, pts_line) = lines
            .next()
            .ok_or_else(|| Error::malformed(path, line_no + 1, "missing POINTS2D line"))?;
        let n = pts_line.split_whitespace().count();
        if n % 3 != 0 {
            return Err(Error::malformed(path, idx2 + 1, "POINTS2D entries must be (X, Y, POINT3D_ID) triples"));
        }
    }
    Ok(views)
}

fn parse_points(path: &Path) -> Result<(PointCloud, Vec<u64>)> {
    let text = read_text(path)?;
    let mut points = Vec::new();
    let mut ids = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let id: u64 = parse_num(toks.next(), path, line_no, "POINT3D_ID")?;
        if !seen.insert(id) {
            return Err(Error::malformed(path, line_no, format!("duplicate point id {id}")));
        }
        let x = parse_finite(toks.next(), path, line_no, "X")?;
        let y = parse_finite(toks.next(), path, line_no, "Y")?;
        let z = parse_finite(toks.next(), path, line_no, "Z")?;
        let r: u8 = parse_num(toks.next(), path, line_no, "R")?;
        let g: u8 = parse_num(toks.next(), path, line_no, "G")?;
        let b: u8 = parse_num(toks.next(), path, line_no, "B")?;
        let _err: f64 = parse_num(toks.next(), path, line_no, "ERROR")?;
        if toks.count() % 2 != 0 {
            return Err(Error::malformed(path, line_no, "TRACK entries must be (IMAGE_ID, POINT2D_IDX) pairs"));
        }
        points.push(Point::new(Vec3::new(x, y, z), Source::Colmap).with_color([r, g, b]));
        ids.push(id);
    }
    Ok((PointCloud::new(points), ids))
}

/// Writes a reconstruction with one PINHOLE camera per view (`CAMERA_ID` =
/// `IMAGE_ID` = view id), empty keypoint lists and empty tracks. Point ids
/// are 1-based in cloud order; points without color are written black.
pub fn write_colmap_reconstruction(
    dir: impl AsRef<Path>,
    views: &[CameraView],
    points: &PointCloud,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;

    let mut cams = String::from("# Camera list with one line of data per camera:\n#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n");
    writeln!(cams, "# Number of cameras: {}", views.len()).unwrap();
    for v in views {
        let k = v.intrinsics;
        writeln!(cams, "{} PINHOLE {} {} {} {} {} {}", v.view_id, v.width, v.height, k.fx, k.fy, k.cx, k.cy).unwrap();
    }
    fs::write(dir.join("cameras.txt"), cams)?;

    let mut imgs = String::from("# Image list with two lines of data per image:\n#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n#   POINTS2D[] as (X, Y, POINT3D_ID)\n");
    writeln!(imgs, "# Number of images: {}", views.len()).unwrap();
    for v in views {
        let q = UnitQuaternion::from_matrix(v.rotation());
        let t = v.translation();
        writeln!(
            imgs,
            "{} {} {} {} {} {} {} {} {} view_{:04}.png",
            v.view_id, q.w, q.i, q.j, q.k, t.x, t.y, t.z, v.view_id, v.view_id
        )
        .unwrap();
        imgs.push('\n');
    }
    fs::write(dir.join("images.txt"), imgs)?;

    let mut pts = String::from("# 3D point list with one line of data per point:\n#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n");
    writeln!(pts, "# Number of points: {}", points.len()).unwrap();
    for (i, p) in points.points.iter().enumerate() {
        let [r, g, b] = p.color.unwrap_or([0, 0, 0]);
        let pos = p.position;
        writeln!(pts, "{} {} {} {} {} {} {} 0", i + 1, pos.x, pos.y, pos.z, r, g, b).unwrap();
    }
    fs::write(dir.join("points3D.txt"), pts)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Rotation3};

    fn write_files(dir: &Path, cameras: &str, images: &str, points: &str) {
        fs::write(dir.join("cameras.txt"), cameras).unwrap();
        fs::write(dir.join("images.txt"), images).unwrap();
        fs::write(dir.join("points3D.txt"), points).unwrap();
    }

    const CAMS: &str = "# comment\n1 PINHOLE 100 80 90 95 50 40\n";

    #[test]
    fn identity_pose_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let mut images = String::new();
        for id in 1..=3 {
            images.push_str(&format!("{id} 1 0 0 0 0 0 0 1 img{id}.png\n\n"));
        }
        let mut points = String::new();
        for id in 0..100 {
            points.push_str(&format!("{id} {} 0.5 2 10 20 30 0.1 1 0 2 5\n", id as f64 * 0.01));
        }
        write_files(dir.path(), CAMS, &images, &points);
        let bundle = read_colmap_reconstruction(dir.path()).unwrap();
        assert_eq!(bundle.views.len(), 3);
        assert_eq!(bundle.colmap_points.len(), 100);
        assert_eq!(bundle.views[0].pose_matrix(), nalgebra::Matrix4::identity());
        assert_eq!(bundle.colmap_points.points[3].color, Some([10, 20, 30]));
        assert_eq!(bundle.colmap_point_ids, (0..100).collect::<Vec<u64>>());
        assert_eq!(bundle.views[1].intrinsics, Intrinsics::new(90.0, 95.0, 50.0, 40.0));
    }

    #[test]
    fn simple_models_and_unsupported_model() {
        let dir = tempfile::tempdir().unwrap();
        let cams = "1 SIMPLE_PINHOLE 100 80 90 50 40\n2 SIMPLE_RADIAL 100 80 90 50 40 0.01\n";
        let images = "1 1 0 0 0 0 0 0 1 a.png\n1 2 3\n2 1 0 0 0 1 0 0 2 b.png\n\n";
        write_files(dir.path(), cams, images, "1 0 0 1 0 0 0 0\n");
        let bundle = read_colmap_reconstruction(dir.path()).unwrap();
        assert_eq!(bundle.views[0].intrinsics.fy, 90.0);
        assert_eq!(bundle.views[1].intrinsics.fx, 90.0);

        write_files(dir.path(), "1 OPENCV 100 80 90 90 50 40 0 0 0 0\n", images, "1 0 0 1 0 0 0 0\n");
        assert!(matches!(
            read_colmap_reconstruction(dir.path()),
            Err(Error::UnsupportedCameraModel(m)) if m == "OPENCV"
        ));
    }

    #[test]
    fn missing_file_and_malformed_line() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_colmap_reconstruction(dir.path()), Err(Error::MissingFile(_))));
        write_files(dir.path(), CAMS, "1 1 0 0 0 0 0 0 1 a.png\n\n", "# header\n1 0 zero 1 0 0 0 0\n");
        match read_colmap_reconstruction(dir.path()) {
            Err(Error::MalformedRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn write_then_read_round_trips_poses() {
        let dir = tempfile::tempdir().unwrap();
        let k = Intrinsics::new(120.5, 119.25, 64.1, 48.3);
        let views: Vec<CameraView> = (0..4)
            .map(|i| {
                let r = Rotation3::from_euler_angles(0.1 * i as f64, -0.37 * i as f64, 0.05).into_inner();
                CameraView::new(i, k, r, Vec3::new(0.3 * i as f64, -1.0 / 3.0, 2.0), 128, 96).unwrap()
            })
            .collect();
        let cloud = PointCloud::new(vec![Point::new(Vec3::new(0.1, 0.2, 0.3), Source::Colmap).with_color([1, 2, 3])]);
        write_colmap_reconstruction(dir.path(), &views, &cloud).unwrap();
        let bundle = read_colmap_reconstruction(dir.path()).unwrap();
        for (a, b) in views.iter().zip(&bundle.views) {
            assert_eq!(a.view_id, b.view_id);
            assert_eq!(a.intrinsics, b.intrinsics);
            assert!((a.pose_matrix() - b.pose_matrix()).abs().max() < 1e-9);
        }
        assert_eq!(bundle.colmap_points, cloud);
    }

    #[test]
    fn truncated_files_error_without_panicking() {
        let dir = tempfile::tempdir().unwrap();
        let k = Intrinsics::new(100.0, 100.0, 50.0, 40.0);
        let views = vec![CameraView::new(1, k, Matrix3::identity(), Vec3::zeros(), 100, 80).unwrap()];
        let cloud = PointCloud::new(vec![Point::new(Vec3::new(0.0, 0.0, 1.0), Source::Colmap).with_color([9, 9, 9])]);
        write_colmap_reconstruction(dir.path(), &views, &cloud).unwrap();
        for name in ["cameras.txt", "images.txt", "points3D.txt"] {
            let full = fs::read_to_string(dir.path().join(name)).unwrap();
            let data_start = full.rfind('#').map(|i| full[i..].find('\n').unwrap() + i + 1).unwrap();
            for cut in data_start + 1..full.len() - 1 {
                let sub = tempfile::tempdir().unwrap();
                for other in ["cameras.txt", "images.txt", "points3D.txt"] {
                    fs::copy(dir.path().join(other), sub.path().join(other)).unwrap();
                }
                fs::write(sub.path().join(name), &full[..cut]).unwrap();
                // Must not panic; truncation inside a number may still parse.
                let _ = read_colmap_reconstruction(sub.path());
            }
        }
    }
}
