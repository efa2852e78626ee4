//! Covisibility maps, initial point-cloud enhancement and covisibility-weighted
//! proximity supervision for sparse-view Gaussian splatting.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`io`] and [`scene`] read and write every on-disk artifact.
//! - [`camera`] holds the pinhole model, projection and triangulation.
//! - [`covis`] builds and refines per-view covisibility maps.
//! - [`enhance`] turns COLMAP points, correspondences and depth into `P_final`.
//! - [`proximity`] trains the proximity classifier and evaluates the weighted loss.
//! - [`synth`] generates ground-truthed scenes and brute-force references.

pub mod camera;
pub mod cloud;
pub mod correspondence;
pub mod covis;
pub mod depth;
pub mod enhance;

pub mod error;
pub mod io;
pub mod proximity;

pub mod scene;
pub mod spatial;
pub mod synth;


/// World or camera-frame position in meters.
pub type Vec3 = nalgebra::Vector3<f64>;

pub use camera::{reprojection_error, triangulate, CameraView, Intrinsics, Pixel, Projection, Ray, Triangulation};
pub use cloud::{Point, PointCloud, Source};
pub use correspondence::{CorrespondenceSet, Match};
pub use covis::{build_covis_map, covis_at, refine_covis_map, scene_covis_score, CovisMap, SceneCovisScore};
pub use depth::DepthMap;
pub use error::{Error, Result};
pub use scene::{load_scene, write_scene, SceneBundle};
