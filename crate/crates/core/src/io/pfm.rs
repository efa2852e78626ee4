//! Single-channel PFM depth maps.
//!
//! PFM stores rows bottom-up; [`DepthMap`] keeps them top-down.

use std::fs;
use std::path::Path;

use crate::depth::DepthMap;
use crate::error::{Error, Result};

pub fn read_depth_map(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let data = fs::read(path)?;
    let bad = |m: &str| Error::MalformedHeader(format!("{}: {m}", path.display()));

    // Three whitespace-terminated header tokens: magic, "W H", scale.
    let mut pos = 0;
    let mut next_line = || -> Result<&str> {
        let end = data[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("truncated header"))?;
        let line = std::str::from_utf8(&data[pos..pos + end]).map_err(|_| bad("header is not ASCII"))?;
        pos += end + 1;
        Ok(line.trim())
    };
    match next_line()? {
        "Pf" => {}
        "PF" => return Err(bad("three-channel PFM is not a depth map")),
        _ => return Err(bad("missing Pf magic")),
    }
    let dims = next_line()?.to_string();
    let scale_line = next_line()?.to_string();
    let mut dims = dims.split_whitespace().map(|t| t.parse::<u32>());
    let (width, height) = match (dims.next(), dims.next(), dims.next()) {
        (Some(Ok(w)), Some(Ok(h)), None) => (w, h),
        _ => return Err(bad("invalid dimensions")),
    };
    let scale: f64 = scale_line.parse().map_err(|_| bad("invalid scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("scale must be non-zero"));
    }
    let little_endian = scale < 0.0;
    let n = (width as usize)
        .checked_mul(height as usize)
        .ok_or_else(|| bad("dimensions overflow"))?;
    let body = &data[pos..];
    if body.len() != n * 4 {
        return Err(bad(&format!("raster holds {} bytes, expected {}", body.len(), n * 4)));
    }
    let mut values = vec![0f32; n];
    let w = width as usize;
    for (file_row, chunk) in body.chunks_exact(4 * w.max(1)).enumerate().take(height as usize) {
        let row = height as usize - 1 - file_row;
        for (x, b) in chunk.chunks_exact(4).enumerate() {
            let bytes = [b[0], b[1], b[2], b[3]];
            values[row * w + x] = if little_endian { f32::from_le_bytes(bytes) } else { f32::from_be_bytes(bytes) };
        }
    }
    DepthMap::new(width, height, values)
}

/// Writes a little-endian single-channel PFM, rows bottom-up.
pub fn write_depth_map(map: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", map.width, map.height).into_bytes();
    let w = map.width as usize;
    for row in map.values().chunks(w.max(1)).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}
