//! Correspondence JSONL: one match object per line, one `(src, dst)` view pair per file.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::camera::{CameraView, Pixel};
use crate::correspondence::{CorrespondenceSet, Match, MatchRecord};
use crate::error::{Error, Result};

fn find_view(views: &[CameraView], id: u32) -> Result<&CameraView> {
    views.iter().find(|v| v.view_id == id).ok_or(Error::UnknownView(id))
}

fn check_bounds(view: &CameraView, px: Pixel) -> Result<(u32, u32)> {
    px.floor_in(view.width, view.height).ok_or(Error::OutOfBoundsPixel {
        view: view.view_id,
        x: px.x,
        y: px.y,
        width: view.width,
        height: view.height,
    })
}

/// Reads one correspondence file, validating every match against the image
/// bounds of its views. All lines must name the same `(src_view, dst_view)`.
pub fn read_correspondences(path: impl AsRef<Path>, views: &[CameraView]) -> Result<CorrespondenceSet> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let mut set: Option<CorrespondenceSet> = None;
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MatchRecord =
            serde_json::from_str(line).map_err(|e| Error::malformed(path, line_no, e.to_string()))?;
        if rec.src_view == rec.dst_view {
            return Err(Error::malformed(path, line_no, "source and destination view coincide"));
        }
        let set = set.get_or_insert_with(|| CorrespondenceSet::new(rec.src_view, rec.dst_view));
        if (rec.src_view, rec.dst_view) != (set.src_view, set.dst_view) {
            return Err(Error::malformed(path, line_no, "file mixes view pairs"));
        }
        if !(0.0..=1.0).contains(&rec.conf) {
            return Err(Error::malformed(path, line_no, format!("confidence {} outside [0, 1]", rec.conf)));
        }
        let src = Pixel::new(rec.sx, rec.sy);
        let dst = Pixel::new(rec.dx, rec.dy);
        let (x, y) = check_bounds(find_view(views, rec.src_view)?, src)?;
        check_bounds(find_view(views, rec.dst_view)?, dst)?;
        if !seen.insert((x, y)) {
            return Err(Error::DuplicateSourcePixel {
                src_view: rec.src_view,
                dst_view: rec.dst_view,
                x,
                y,
            });
        }
        set.matches.push(Match { src, dst, conf: rec.conf });
    }
    set.ok_or_else(|| Error::EmptyInput(format!("{} holds no matches", path.display())))
}

pub fn write_correspondences(set: &CorrespondenceSet, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for m in &set.matches {
        let rec = MatchRecord {
            src_view: set.src_view,
            dst_view: set.dst_view,
            sx: m.src.x,
            sy: m.src.y,
            dx: m.dst.x,
            dy: m.dst.y,
            conf: m.conf,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// File name used for the `(src, dst)` pair inside a correspondence directory.
pub fn correspondence_file_name(src_view: u32, dst_view: u32) -> String {
    format!("{src_view:04}_{dst_view:04}.jsonl")
}

/// Reads every `*.jsonl` file of a directory, ordered by `(src_view, dst_view)`.
/// A missing directory yields no sets.
pub fn read_correspondence_dir(dir: impl AsRef<Path>, views: &[CameraView]) -> Result<Vec<CorrespondenceSet>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    files.sort();
    let mut sets = files
        .iter()
        .map(|p| read_correspondences(p, views))
        .collect::<Result<Vec<_>>>()?;
    sets.sort_by_key(|s| (s.src_view, s.dst_view));
    for pair in sets.windows(2) {
        if (pair[0].src_view, pair[0].dst_view) == (pair[1].src_view, pair[1].dst_view) {
            return Err(Error::MalformedRecord {
                path: dir.to_path_buf(),
                line: 0,
                reason: format!("view pair ({}, {}) appears in two files", pair[0].src_view, pair[0].dst_view),
            });
        }
    }
    Ok(sets)
}

/// Writes non-empty sets, one file per pair.
pub fn write_correspondence_dir(dir: impl AsRef<Path>, sets: &[CorrespondenceSet]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for set in sets.iter().filter(|s| !s.is_empty()) {
        write_correspondences(set, dir.join(correspondence_file_name(set.src_view, set.dst_view)))?;
    }
    Ok(())
}
