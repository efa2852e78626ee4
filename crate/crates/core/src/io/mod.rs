//! Readers and writers for everything the pipeline ingests or produces.

pub mod colmap;
pub mod corr;
pub mod pfm;
pub mod pgm;
pub mod ply;

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

pub use colmap::{read_colmap_reconstruction, write_colmap_reconstruction};
pub use corr::{read_correspondence_dir, read_correspondences, write_correspondence_dir, write_correspondences};
pub use pfm::{read_depth_map, write_depth_map};
pub use pgm::{read_covis_map, write_covis_map_image};
pub use ply::{read_ply, read_ply_positions, write_ply};

/// Writes a pretty-printed JSON document with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
