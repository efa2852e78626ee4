use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the pipeline stages and file readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}:{line}: {reason}", path.display())]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("unsupported camera model `{0}`")]
    UnsupportedCameraModel(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("unknown view id {0}")]
    UnknownView(u32),

    #[error("pixel ({x}, {y}) lies outside the {width}x{height} image of view {view}")]
    OutOfBoundsPixel {
        view: u32,
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },

    #[error("source pixel ({x}, {y}) of view {src_view} is matched twice into view {dst_view}")]
    DuplicateSourcePixel {
        src_view: u32,
        dst_view: u32,
        x: u32,
        y: u32,
    },

    #[error("pixel ({x}, {y}) is outside the {width}x{height} map")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },

    #[error("depth must be strictly positive, got {0}")]
    NonPositiveDepth(f64),

    #[error("point lies behind the camera")]
    BehindCamera,

    #[error("degenerate geometry: observation rays are parallel")]
    DegenerateGeometry,

    #[error("triangulation needs at least two observations from distinct views, got {0}")]
    InsufficientObservations(usize),

    #[error("view id mismatch: expected {expected}, found {found}")]
    ViewIdMismatch { expected: u32, found: u32 },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("covisibility maps disagree on the number of views ({0} vs {1})")]
    InconsistentN(u32, u32),

    #[error("no correspondences available for triangulation")]
    NoCorrespondences,

    #[error("base point cloud is empty")]
    EmptyBase,

    #[error("maps and views are not aligned: {0}")]
    MapViewMismatch(String),

    #[error("dimension mismatch: expected {expected_w}x{expected_h}, found {found_w}x{found_h}")]
    DimensionMismatch {
        expected_w: u32,
        expected_h: u32,
        found_w: u32,
        found_h: u32,
    },

    #[error("scale fit needs at least {required} pairs, found {found}")]
    InsufficientPairs { found: usize, required: usize },

    #[error("fitted scale {0:?} has a non-positive component")]
    NonPositiveScale([f64; 3]),

    #[error("scale transform was fitted in view {expected} but applied to view {found}")]
    FrameMismatch { expected: u32, found: u32 },

    #[error("negative sampling starved: accepted {accepted} of {attempts} candidates")]
    SamplingStarvation { accepted: usize, attempts: usize },

    #[error("training loss became non-finite at iteration {0}")]
    NonFiniteLoss(usize),

    #[error("degenerate scene: {0}")]
    DegenerateSpec(String),

    #[error("invalid model file: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn malformed(path: impl Into<PathBuf>, line: usize, reason: impl Into<String>) -> Self {
        Error::MalformedRecord {
            path: path.into(),
            line,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
