use serde::{Deserialize, Serialize};

use crate::camera::Pixel;

/// One dense match from a source pixel to a destination pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub src: Pixel,
    pub dst: Pixel,
    /// Matcher confidence in `[0, 1]`.
    pub conf: f64,
}

/// Matches from one source view into one destination view.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub src_view: u32,
    pub dst_view: u32,
    pub matches: Vec<Match>,
}

impl CorrespondenceSet {
    pub fn new(src_view: u32, dst_view: u32) -> Self {
        Self { src_view, dst_view, matches: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }
}

/// One line of the correspondence JSONL format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchRecord {
    pub src_view: u32,
    pub dst_view: u32,
    pub sx: f64,
    pub sy: f64,
    pub dx: f64,
    pub dy: f64,
    pub conf: f64,
}
