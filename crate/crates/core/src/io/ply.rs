//! PLY point clouds with a `source` provenance property.
//!
//! Written files carry `x, y, z` as `double`, `red, green, blue` and `source`
//! as `uchar`. The reader accepts any scalar property layout in ASCII or
//! binary form, so generic Gaussian-splat PLYs load through [`read_ply_positions`].

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::cloud::{Point, PointCloud, Source};
use crate::error::{Error, Result};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
    BinaryBe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, bytes: &[u8], big_endian: bool) -> f64 {
        macro_rules! num {
            ($t:ty, $n:expr) => {{
                let arr: [u8; $n] = bytes[..$n].try_into().unwrap();
                (if big_endian { <$t>::from_be_bytes(arr) } else { <$t>::from_le_bytes(arr) }) as f64
            }};
        }
        match self {
            Scalar::I8 => bytes[0] as i8 as f64,
            Scalar::U8 => bytes[0] as f64,
            Scalar::I16 => num!(i16, 2),
            Scalar::U16 => num!(u16, 2),
            Scalar::I32 => num!(i32, 4),
            Scalar::U32 => num!(u32, 4),
            Scalar::F32 => num!(f32, 4),
            Scalar::F64 => num!(f64, 8),
        }
    }
}

struct Header {
    format: Format,
    count: usize,
    properties: Vec<(String, Scalar)>,
    body_offset: usize,
}

fn parse_header(data: &[u8]) -> Result<Header> {
    let bad = |msg: &str| Error::MalformedHeader(msg.to_string());
    let end = find_subslice(data, b"end_header").ok_or_else(|| bad("missing end_header"))?;
    let mut body_offset = end + b"end_header".len();
    match data.get(body_offset) {
        Some(b'\n') => body_offset += 1,
        Some(b'\r') if data.get(body_offset + 1) == Some(&b'\n') => body_offset += 2,
        _ => return Err(bad("end_header must be followed by a newline")),
    }
    let text = std::str::from_utf8(&data[..end]).map_err(|_| bad("header is not UTF-8"))?;
    let mut lines = text.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(bad("missing ply magic"));
    }
    let mut format = None;
    let mut count = None;
    let mut properties = Vec::new();
    // True while parsing properties of the vertex element.
    let mut in_vertex = false;
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, "1.0"] => {
                format = Some(match *fmt {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    "binary_big_endian" => Format::BinaryBe,
                    other => return Err(Error::MalformedHeader(format!("unknown format {other}"))),
                })
            }
            ["element", name, n] => {
                if count.is_some() {
                    // Elements after the vertex block are never read.
                    in_vertex = false;
                    continue;
                }
                if *name != "vertex" {
                    return Err(Error::MalformedHeader(format!(
                        "element `{name}` precedes the vertex element"
                    )));
                }
                count = Some(n.parse::<usize>().map_err(|_| bad("invalid vertex count"))?);
                in_vertex = true;
            }
            ["property", "list", ..] if in_vertex => return Err(bad("list properties on vertices are not supported")),
            ["property", ty, name] if in_vertex => {
                let scalar = Scalar::parse(ty)
                    .ok_or_else(|| Error::MalformedHeader(format!("unknown property type {ty}")))?;
                properties.push((name.to_string(), scalar));
            }
            ["property", ..] => {}
            _ => return Err(Error::MalformedHeader(format!("unrecognized header line `{line}`"))),
        }
    }
    Ok(Header {
        format: format.ok_or_else(|| bad("missing format line"))?,
        count: count.ok_or_else(|| bad("missing vertex element"))?,
        properties,
        body_offset,
    })
}

fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

/// Decodes all vertex rows as `f64` values in property order.
fn read_rows(path: &Path) -> Result<(Header, Vec<Vec<f64>>)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let data = fs::read(path)?;
    let header = parse_header(&data)?;
    let body = &data[header.body_offset..];
    let width = header.properties.len();
    let mut rows = Vec::with_capacity(header.count.min(body.len()));
    match header.format {
        Format::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| Error::MalformedHeader("ASCII body is not UTF-8".into()))?;
            let mut lines = text.lines().filter(|l| !l.trim().is_empty());
            for i in 0..header.count {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::malformed(path, i + 1, "fewer vertices than declared"))?;
                let row = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<Vec<f64>, _>>()
                    .map_err(|_| Error::malformed(path, i + 1, "invalid number"))?;
                if row.len() != width {
                    return Err(Error::malformed(path, i + 1, format!("expected {width} values, got {}", row.len())));
                }
                rows.push(row);
            }
        }
        Format::BinaryLe | Format::BinaryBe => {
            let big = header.format == Format::BinaryBe;
            let stride: usize = header.properties.iter().map(|(_, s)| s.size()).sum();
            let needed = stride
                .checked_mul(header.count)
                .ok_or_else(|| Error::MalformedHeader("vertex count overflows".into()))?;
            if body.len() < needed {
                return Err(Error::malformed(
                    path,
                    body.len() / stride.max(1) + 1,
                    "binary body shorter than declared vertex count",
                ));
            }
            for chunk in body[..needed].chunks_exact(stride.max(1)).take(header.count) {
                let mut offset = 0;
                let mut row = Vec::with_capacity(width);
                for (_, s) in &header.properties {
                    row.push(s.decode(&chunk[offset..], big));
                    offset += s.size();
                }
                rows.push(row);
            }
        }
    }
    Ok((header, rows))
}

fn column(header: &Header, name: &str) -> Option<usize> {
    header.properties.iter().position(|(n, _)| n == name)
}

fn xyz_columns(header: &Header) -> Result<[usize; 3]> {
    let get = |n: &str| column(header, n).ok_or_else(|| Error::MalformedHeader(format!("missing vertex property {n}")));
    Ok([get("x")?, get("y")?, get("z")?])
}

fn position(path: &Path, i: usize, row: &[f64], xyz: [usize; 3]) -> Result<Vec3> {
    let p = Vec3::new(row[xyz[0]], row[xyz[1]], row[xyz[2]]);
    if !p.iter().all(|v| v.is_finite()) {
        return Err(Error::malformed(path, i + 1, "non-finite position"));
    }
    Ok(p)
}

/// Reads a tagged point cloud. Points lacking color properties get `None`;
/// a missing `source` property tags every point as [`Source::Colmap`].
pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let (header, rows) = read_rows(path)?;
    let xyz = xyz_columns(&header)?;
    let rgb = match (column(&header, "red"), column(&header, "green"), column(&header, "blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    let src = column(&header, "source");
    let mut points = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let source = match src {
            Some(c) => {
                let tag = row[c];
                if !(0.0..=255.0).contains(&tag) || tag.fract() != 0.0 {
                    return Err(Error::malformed(path, i + 1, format!("invalid source tag {tag}")));
                }
                Source::from_tag(tag as u8)
                    .ok_or_else(|| Error::malformed(path, i + 1, format!("invalid source tag {tag}")))?
            }
            None => Source::Colmap,
        };
        let mut point = Point::new(position(path, i, row, xyz)?, source);
        if let Some(cols) = rgb {
            let mut color = [0u8; 3];
            for (c, &col) in color.iter_mut().zip(&cols) {
                *c = row[col].clamp(0.0, 255.0) as u8;
            }
            point.color = Some(color);
        }
        points.push(point);
    }
    Ok(PointCloud::new(points))
}

/// Reads only vertex positions from any PLY with `x, y, z` properties.
pub fn read_ply_positions(path: impl AsRef<Path>) -> Result<Vec<Vec3>> {
    let path = path.as_ref();
    let (header, rows) = read_rows(path)?;
    let xyz = xyz_columns(&header)?;
    rows.iter().enumerate().map(|(i, row)| position(path, i, row, xyz)).collect()
}

/// Writes a tagged cloud. Missing colors are written as black.
pub fn write_ply(cloud: &PointCloud, path: impl AsRef<Path>, binary: bool) -> Result<()> {
    let file = fs::File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    let format = if binary { "binary_little_endian" } else { "ascii" };
    write!(
        w,
        "ply\nformat {format} 1.0\ncomment source: 0=colmap 1=triangulated 2=mono\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nproperty uchar source\nend_header\n",
        cloud.len()
    )?;
    for p in &cloud.points {
        let [r, g, b] = p.color.unwrap_or([0, 0, 0]);
        if binary {
            for v in p.position.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&[r, g, b, p.source.tag()])?;
        } else {
            writeln!(w, "{} {} {} {r} {g} {b} {}", p.position.x, p.position.y, p.position.z, p.source.tag())?;
        }
    }
    w.flush()?;
    Ok(())
}
