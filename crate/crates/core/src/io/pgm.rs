//! Binary PGM (P5) export of covisibility maps.

use std::fs;
use std::path::Path;

use crate::covis::CovisMap;
use crate::error::{Error, Result};

/// Raw 8- or 16-bit grayscale raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: u32,
    pub height: u32,
    pub maxval: u16,
    pub values: Vec<u16>,
    /// Comment lines from the header, without the leading `#`.
    pub comments: Vec<String>,
}

fn header(width: u32, height: u32, maxval: u16, comments: &[String]) -> Vec<u8> {
    let mut h = String::from("P5\n");
    for c in comments {
        h.push_str(&format!("#{c}\n"));
    }
    h.push_str(&format!("{width} {height}\n{maxval}\n"));
    h.into_bytes()
}

pub fn write_pgm(pgm: &Pgm, path: impl AsRef<Path>) -> Result<()> {
    let mut out = header(pgm.width, pgm.height, pgm.maxval, &pgm.comments);
    if pgm.maxval < 256 {
        out.extend(pgm.values.iter().map(|&v| v as u8));
    } else {
        for v in &pgm.values {
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Pgm> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let data = fs::read(path)?;
    let bad = |m: &str| Error::MalformedHeader(format!("{}: {m}", path.display()));
    if !data.starts_with(b"P5") {
        return Err(bad("missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = Vec::with_capacity(3);
    let mut comments = Vec::new();
    while fields.len() < 3 {
        match data.get(pos) {
            None => return Err(bad("truncated header")),
            Some(b'#') => {
                let end = data[pos..].iter().position(|&b| b == b'\n').ok_or_else(|| bad("unterminated comment"))?;
                comments.push(String::from_utf8_lossy(&data[pos + 1..pos + end]).into_owned());
                pos += end + 1;
            }
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            Some(b) if b.is_ascii_digit() => {
                let start = pos;
                while data.get(pos).is_some_and(|b| b.is_ascii_digit()) {
                    pos += 1;
                }
                let text = std::str::from_utf8(&data[start..pos]).unwrap();
                fields.push(text.parse::<u32>().map_err(|_| bad("header number out of range"))?);
            }
            Some(_) => return Err(bad("unexpected byte in header")),
        }
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !data.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(bad("missing separator after maxval"));
    }
    pos += 1;
    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval must be in 1..=65535"));
    }
    let n = (width as usize)
        .checked_mul(height as usize)
        .ok_or_else(|| bad("dimensions overflow"))?;
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let body = &data[pos..];
    if body.len() != n * bytes_per {
        return Err(bad(&format!("raster holds {} bytes, expected {}", body.len(), n * bytes_per)));
    }
    let values: Vec<u16> = if bytes_per == 1 {
        body.iter().map(|&b| b as u16).collect()
    } else {
        body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    };
    if values.iter().any(|&v| v > maxval as u16) {
        return Err(bad("sample exceeds maxval"));
    }
    Ok(Pgm { width, height, maxval: maxval as u16, values, comments })
}

/// 8-bit visualization value for `count` with `n_views` training views:
/// linear so that `n − 1 ↦ 255`, rounded half up.
pub fn visualization_level(count: u16, n_views: u32) -> u8 {
    if n_views <= 1 {
        return 0;
    }
    let denom = (n_views - 1) as u64;
    // round(count * 255 / denom) with ties going up, in exact integer arithmetic.
    ((2 * count as u64 * 255 + denom) / (2 * denom)).min(255) as u8
}

/// Writes the raw 16-bit count map to `raw_path` and the 8-bit
/// visualization to `vis_path`. The raw file records view id and view count
/// in header comments so [`read_covis_map`] can restore the map.
pub fn write_covis_map_image(map: &CovisMap, raw_path: impl AsRef<Path>, vis_path: impl AsRef<Path>) -> Result<()> {
    let comments = vec![format!(" view_id={}", map.view_id), format!(" n_views={}", map.n_views)];
    write_pgm(
        &Pgm {
            width: map.width,
            height: map.height,
            maxval: u16::MAX,
            values: map.counts().to_vec(),
            comments,
        },
        raw_path,
    )?;
    write_pgm(
        &Pgm {
            width: map.width,
            height: map.height,
            maxval: 255,
            values: map
                .counts()
                .iter()
                .map(|&c| visualization_level(c, map.n_views) as u16)
                .collect(),
            comments: Vec::new(),
        },
        vis_path,
    )
}

/// Reads a raw count map written by [`write_covis_map_image`].
pub fn read_covis_map(path: impl AsRef<Path>) -> Result<CovisMap> {
    let path = path.as_ref();
    let pgm = read_pgm(path)?;
    let field = |key: &str| -> Result<u32> {
        pgm.comments
            .iter()
            .find_map(|c| c.trim().strip_prefix(key).and_then(|v| v.strip_prefix('=')))
            .ok_or_else(|| Error::MalformedHeader(format!("{}: missing `{key}` comment", path.display())))?
            .parse()
            .map_err(|_| Error::MalformedHeader(format!("{}: invalid `{key}`", path.display())))
    };
    let view_id = field("view_id")?;
    let n_views = field("n_views")?;
    CovisMap::from_counts(view_id, pgm.width, pgm.height, n_views, pgm.values)
}
