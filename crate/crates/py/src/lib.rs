//! Python bindings. Points cross the boundary as lists of `[x, y, z]`.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use comap_core::covis::{self, SceneCovisScore};
use comap_core::enhance::{self, EnhanceParams};
use comap_core::proximity::{self, train};
use comap_core::{synth, Error, PointCloud, Source, Vec3};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::MissingFile(_) => PyOSError::new_err(e.to_string()),
        Error::NonFiniteLoss(_)
        | Error::NonPositiveScale(_)
        | Error::DegenerateGeometry
        | Error::SamplingStarvation { .. } => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn points_in(points: Vec<[f64; 3]>) -> Vec<Vec3> {
    points.into_iter().map(Vec3::from).collect()
}

fn points_out(points: &[Vec3]) -> Vec<[f64; 3]> {
    points.iter().map(|p| [p.x, p.y, p.z]).collect()
}

fn json_to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "CameraView", module = "comap", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCameraView(comap_core::CameraView);

#[pymethods]
impl PyCameraView {
    #[getter]
    fn view_id(&self) -> u32 {
        self.0.view_id
    }

    #[getter]
    fn width(&self) -> u32 {
        self.0.width
    }

    #[getter]
    fn height(&self) -> u32 {
        self.0.height
    }

    #[getter]
    fn center(&self) -> [f64; 3] {
        let c = self.0.center();
        [c.x, c.y, c.z]
    }

    /// `(x, y, depth)` of a world point, or `None` outside the image.
    fn project(&self, point: [f64; 3]) -> Option<(f64, f64, f64)> {
        self.0.project(&Vec3::from(point)).map(|p| (p.pixel.x, p.pixel.y, p.depth))
    }

    fn __repr__(&self) -> String {
        format!("CameraView(view_id={}, {}x{})", self.0.view_id, self.0.width, self.0.height)
    }
}

#[pyclass(name = "SceneBundle", module = "comap", frozen)]
struct PySceneBundle(comap_core::SceneBundle);

#[pymethods]
impl PySceneBundle {
    #[staticmethod]
    #[pyo3(signature = (scene_dir, corr_dir=None, depth_dir=None))]
    fn load(scene_dir: PathBuf, corr_dir: Option<PathBuf>, depth_dir: Option<PathBuf>) -> PyResult<Self> {
        comap_core::load_scene(&scene_dir, corr_dir.as_deref(), depth_dir.as_deref())
            .map(Self)
            .map_err(to_py_err)
    }

    fn write(&self, scene_dir: PathBuf) -> PyResult<()> {
        std::fs::create_dir_all(&scene_dir)?;
        comap_core::write_scene(&self.0, &scene_dir).map_err(to_py_err)
    }

    #[getter]
    fn views(&self) -> Vec<PyCameraView> {
        self.0.views.iter().cloned().map(PyCameraView).collect()
    }

    #[getter]
    fn colmap_points(&self) -> Vec<[f64; 3]> {
        points_out(&self.0.colmap_points.positions())
    }

    #[getter]
    fn depth_view_ids(&self) -> Vec<u32> {
        self.0.depth_maps.keys().copied().collect()
    }

    /// `(src_view, dst_view, matches)` per correspondence set.
    fn correspondence_counts(&self) -> Vec<(u32, u32, usize)> {
        self.0.correspondences.iter().map(|s| (s.src_view, s.dst_view, s.len())).collect()
    }

    fn __len__(&self) -> usize {
        self.0.views.len()
    }
}

#[pyclass(name = "CovisMap", module = "comap", frozen, from_py_object)]
#[derive(Clone)]
struct PyCovisMap(covis::CovisMap);

#[pymethods]
impl PyCovisMap {
    #[getter]
    fn view_id(&self) -> u32 {
        self.0.view_id
    }

    #[getter]
    fn width(&self) -> u32 {
        self.0.width
    }

    #[getter]
    fn height(&self) -> u32 {
        self.0.height
    }

    #[getter]
    fn n_views(&self) -> u32 {
        self.0.n_views
    }

    /// Row-major counts.
    fn counts(&self) -> Vec<u16> {
        self.0.counts().to_vec()
    }

    fn get(&self, x: u32, y: u32) -> PyResult<u16> {
        if x >= self.0.width || y >= self.0.height {
            return Err(PyValueError::new_err(format!("pixel ({x}, {y}) outside the map")));
        }
        Ok(self.0.get(x, y))
    }

    fn normalized_mean(&self) -> f64 {
        self.0.normalized_mean()
    }

    #[pyo3(signature = (kernel_radius=covis::DEFAULT_KERNEL_RADIUS))]
    fn refine(&self, kernel_radius: u32) -> Self {
        Self(covis::refine_covis_map(&self.0, kernel_radius))
    }
}

#[pyfunction]
#[pyo3(signature = (bundle, min_conf=0.0))]
fn build_covis_maps(bundle: &PySceneBundle, min_conf: f64) -> PyResult<Vec<PyCovisMap>> {
    let maps = enhance::build_scene_maps(&bundle.0, min_conf).map_err(to_py_err)?;
    Ok(maps.into_iter().map(PyCovisMap).collect())
}

/// `(S, per_view_means)`.
#[pyfunction]
fn scene_covis_score(maps: Vec<PyCovisMap>) -> PyResult<(f64, Vec<f64>)> {
    let maps: Vec<_> = maps.into_iter().map(|m| m.0).collect();
    let s = covis::scene_covis_score(&maps).map_err(to_py_err)?;
    Ok((s.score, s.per_view_means))
}

#[pyfunction]
fn weight_in(count: u16) -> f64 {
    1.0 / (count as f64 + 1.0)
}

#[pyfunction]
fn weight_out(scene_score: f64) -> f64 {
    proximity::weight_out_from(scene_score)
}

/// Runs the enhancement stage. Returns `(p_final, p_final_sources, stats)`
/// with sources as `"colmap"`, `"triangulated"` or `"mono"`.
#[pyfunction]
#[pyo3(signature = (bundle, gate_px=comap_core::camera::DEFAULT_GATE_PX, epsilon=None, stride=enhance::DEFAULT_STRIDE))]
fn run_enhance<'py>(
    py: Python<'py>,
    bundle: &PySceneBundle,
    gate_px: f64,
    epsilon: Option<f64>,
    stride: u32,
) -> PyResult<(Vec<[f64; 3]>, Vec<&'static str>, Bound<'py, PyAny>)> {
    let params = EnhanceParams { gate_px, epsilon, stride, ..EnhanceParams::default() };
    let out = py.detach(|| enhance::enhance(&bundle.0, &params)).map_err(to_py_err)?;
    let sources = out
        .p_final
        .points
        .iter()
        .map(|p| match p.source {
            Source::Colmap => "colmap",
            Source::Triangulated => "triangulated",
            Source::Mono => "mono",
        })
        .collect();
    Ok((points_out(&out.p_final.positions()), sources, json_to_py(py, &out.stats)?))
}

#[pyclass(name = "ProximityModel", module = "comap", frozen)]
struct PyProximityModel(proximity::ProximityModel);

#[pymethods]
impl PyProximityModel {
    /// Trains on `points` as positives. Returns `(model, loss_curve)`.
    #[staticmethod]
    #[pyo3(signature = (points, iters=train::DEFAULT_ITERS, lr=train::DEFAULT_LR, ratio=1.0, r_neg=None, seed=0))]
    fn train(
        py: Python<'_>,
        points: Vec<[f64; 3]>,
        iters: usize,
        lr: f64,
        ratio: f64,
        r_neg: Option<f64>,
        seed: u64,
    ) -> PyResult<(Self, Vec<f64>)> {
        let cloud = PointCloud::from_positions(points_in(points), Source::Colmap);
        let outcome = py
            .detach(|| {
                let ts = train::make_training_set(&cloud, ratio, r_neg, seed)?;
                train::train_classifier(&ts, iters, lr, seed)
            })
            .map_err(to_py_err)?;
        Ok((Self(outcome.model), outcome.curve))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        proximity::ProximityModel::load(path).map(Self).map_err(to_py_err)
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        proximity::ProximityModel::from_bytes(data).map(Self).map_err(to_py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(path).map_err(to_py_err)
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes()
    }

    /// Proximity scores in `(0, 1)`.
    fn score(&self, points: Vec<[f64; 3]>) -> Vec<f64> {
        self.0.score_batch(&points_in(points))
    }

    #[getter]
    fn final_loss(&self) -> f64 {
        self.0.meta.final_loss
    }
}

/// Proximity loss of `gaussians` against one view. Returns
/// `(loss, [(in_frustum, weight, score), ...])`.
#[pyfunction]
fn proximity_loss(
    model: &PyProximityModel,
    gaussians: Vec<[f64; 3]>,
    view: &PyCameraView,
    map: &PyCovisMap,
    scene_score: f64,
) -> PyResult<(f64, Vec<(bool, f64, f64)>)> {
    let score = SceneCovisScore { score: scene_score, per_view_means: Vec::new() };
    let eval = proximity::proximity_loss(&model.0, &points_in(gaussians), &view.0, &map.0, &score)
        .map_err(to_py_err)?;
    Ok((eval.loss, eval.terms.iter().map(|t| (t.in_frustum, t.weight, t.score)).collect()))
}

/// Generates a synthetic scene from its JSON description, optionally
/// writing it (with ground truth) to `out_dir`.
#[pyfunction]
#[pyo3(signature = (spec_json, out_dir=None))]
fn generate_scene(py: Python<'_>, spec_json: &str, out_dir: Option<PathBuf>) -> PyResult<PySceneBundle> {
    let spec = synth::SceneSpec::from_json(spec_json).map_err(to_py_err)?;
    let scene = py.detach(|| synth::generate_scene(&spec)).map_err(to_py_err)?;
    if let Some(dir) = out_dir {
        synth::write_generated_scene(&scene, &dir).map_err(to_py_err)?;
    }
    Ok(PySceneBundle(scene.bundle))
}

#[pymodule]
fn comap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCameraView>()?;
    m.add_class::<PySceneBundle>()?;
    m.add_class::<PyCovisMap>()?;
    m.add_class::<PyProximityModel>()?;
    m.add_function(wrap_pyfunction!(build_covis_maps, m)?)?;
    m.add_function(wrap_pyfunction!(scene_covis_score, m)?)?;
    m.add_function(wrap_pyfunction!(weight_in, m)?)?;
    m.add_function(wrap_pyfunction!(weight_out, m)?)?;
    m.add_function(wrap_pyfunction!(run_enhance, m)?)?;
    m.add_function(wrap_pyfunction!(proximity_loss, m)?)?;
    m.add_function(wrap_pyfunction!(generate_scene, m)?)?;
    Ok(())
}
