use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::camera::CameraView;
use crate::cloud::PointCloud;
use crate::correspondence::CorrespondenceSet;
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::io;

/// Subdirectory holding `view_NNNN.pfm` depth maps.
pub const DEPTH_DIR: &str = "depth";
/// Subdirectory holding `SSSS_DDDD.jsonl` correspondence files.
pub const CORR_DIR: &str = "corr";

/// Everything the pipeline consumes for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    /// Sorted by ascending view id.
    pub views: Vec<CameraView>,
    pub colmap_points: PointCloud,
    /// COLMAP `POINT3D_ID` per point; empty when the cloud was not read from COLMAP.
    pub colmap_point_ids: Vec<u64>,
    pub depth_maps: BTreeMap<u32, DepthMap>,
    pub correspondences: Vec<CorrespondenceSet>,
}

impl SceneBundle {
    pub fn new(mut views: Vec<CameraView>, colmap_points: PointCloud) -> Result<Self> {
        views.sort_by_key(|v| v.view_id);
        if views.windows(2).any(|w| w[0].view_id == w[1].view_id) {
            return Err(Error::InvalidParameter("duplicate view id".into()));
        }
        if !colmap_points.is_finite() {
            return Err(Error::InvalidParameter("COLMAP points must be finite".into()));
        }
        Ok(Self {
            views,
            colmap_points,
            colmap_point_ids: Vec::new(),
            depth_maps: BTreeMap::new(),
            correspondences: Vec::new(),
        })
    }

    pub fn view(&self, id: u32) -> Result<&CameraView> {
        self.views
            .binary_search_by_key(&id, |v| v.view_id)
            .map(|i| &self.views[i])
            .map_err(|_| Error::UnknownView(id))
    }

    pub fn n_views(&self) -> u32 {
        self.views.len() as u32
    }

    pub fn with_depth_map(mut self, view_id: u32, depth: DepthMap) -> Result<Self> {
        let view = self.view(view_id)?;
        if (depth.width, depth.height) != (view.width, view.height) {
            return Err(Error::DimensionMismatch {
                expected_w: view.width,
                expected_h: view.height,
                found_w: depth.width,
                found_h: depth.height,
            });
        }
        self.depth_maps.insert(view_id, depth);
        Ok(self)
    }

    pub fn with_correspondences(mut self, sets: Vec<CorrespondenceSet>) -> Result<Self> {
        for s in &sets {
            if s.src_view == s.dst_view {
                return Err(Error::ViewIdMismatch { expected: s.src_view, found: s.dst_view });
            }
            self.view(s.src_view)?;
            self.view(s.dst_view)?;
        }
        self.correspondences = sets;
        Ok(self)
    }

    /// Sets whose source is `view_id`, in destination order.
    pub fn correspondences_from(&self, view_id: u32) -> Vec<&CorrespondenceSet> {
        let mut sets: Vec<&CorrespondenceSet> =
            self.correspondences.iter().filter(|s| s.src_view == view_id).collect();
        sets.sort_by_key(|s| s.dst_view);
        sets
    }
}

/// Loads a scene directory: COLMAP text files at the root, optional
/// `depth/view_NNNN.pfm` maps and optional `corr/*.jsonl` matches. Either
/// auxiliary directory can be overridden.
pub fn load_scene(scene_dir: &Path, corr_dir: Option<&Path>, depth_dir: Option<&Path>) -> Result<SceneBundle> {
    let mut bundle = io::read_colmap_reconstruction(scene_dir)?;
    let depth_dir = depth_dir.map(Path::to_path_buf).unwrap_or_else(|| scene_dir.join(DEPTH_DIR));
    if depth_dir.is_dir() {
        let ids: Vec<u32> = bundle.views.iter().map(|v| v.view_id).collect();
        for id in ids {
            let path = depth_dir.join(depth_file_name(id));
            if path.exists() {
                let depth = io::read_depth_map(&path)?;
                bundle = bundle.with_depth_map(id, depth)?;
            }
        }
    }
    let corr_dir = corr_dir.map(Path::to_path_buf).unwrap_or_else(|| scene_dir.join(CORR_DIR));
    let sets = io::read_correspondence_dir(&corr_dir, &bundle.views)?;
    bundle.with_correspondences(sets)
}

/// Writes a bundle in the layout [`load_scene`] reads.
pub fn write_scene(bundle: &SceneBundle, scene_dir: &Path) -> Result<()> {
    io::write_colmap_reconstruction(scene_dir, &bundle.views, &bundle.colmap_points)?;
    if !bundle.depth_maps.is_empty() {
        let dir = scene_dir.join(DEPTH_DIR);
        fs::create_dir_all(&dir)?;
        for (id, depth) in &bundle.depth_maps {
            io::write_depth_map(depth, dir.join(depth_file_name(*id)))?;
        }
    }
    io::write_correspondence_dir(scene_dir.join(CORR_DIR), &bundle.correspondences)
}

pub fn depth_file_name(view_id: u32) -> String {
    format!("view_{view_id:04}.pfm")
}
