use serde::{Deserialize, Serialize};

use crate::Vec3;

/// Where a point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Colmap = 0,
    Triangulated = 1,
    Mono = 2,
}

impl Source {
    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Source::Colmap),
            1 => Some(Source::Triangulated),
            2 => Some(Source::Mono),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub position: Vec3,
    pub color: Option<[u8; 3]>,
    pub source: Source,
    pub origin_view: Option<u32>,
    pub origin_pixel: Option<(u32, u32)>,
}

impl Point {
    pub fn new(position: Vec3, source: Source) -> Self {
        Self {
            position,
            color: None,
            source,
            origin_view: None,
            origin_pixel: None,
        }
    }

    pub fn with_color(mut self, color: [u8; 3]) -> Self {
        self.color = Some(color);
        self
    }

    pub fn with_origin(mut self, view: u32, pixel: (u32, u32)) -> Self {
        self.origin_view = Some(view);
        self.origin_pixel = Some(pixel);
        self
    }
}

/// An ordered, tagged point set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn from_positions(positions: impl IntoIterator<Item = Vec3>, source: Source) -> Self {
        Self::new(positions.into_iter().map(|p| Point::new(p, source)).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| p.position).collect()
    }

    pub fn count_source(&self, source: Source) -> usize {
        self.points.iter().filter(|p| p.source == source).count()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.position.iter().all(|v| v.is_finite()))
    }

    pub fn extend(&mut self, other: PointCloud) {
        self.points.extend(other.points);
    }

    /// Axis-aligned bounds `(min, max)`, or `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = self.points.first()?.position;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(&p.position), hi.sup(&p.position))
        }))
    }
}

impl FromIterator<Point> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}
