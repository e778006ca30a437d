//! Python bindings for `pcselect-core`.
//!
//! Point clouds cross the boundary as `PointCloud` objects or raw KITTI
//! velodyne bytes; boxes as `OrientedBox3D`. Domain errors become
//! `ValueError`, transport failures `ConnectionError`.

use std::time::Duration;

use pcselect_core::degrade;
use pcselect_core::detect::{render_bev_svg, BaselineDetector, Detector};
use pcselect_core::eval::{self, MatchLabel};
use pcselect_core::features::{self, DataFeatures};
use pcselect_core::kitti;
use pcselect_core::protocol::{self, ClientConfig, ClientError, TcpConnector, WireMessage};
use pcselect_core::registry;
use pcselect_core::selector::{self, SelectionThresholds, SizeTable, TargetData};
use pcselect_core::synth;
use pyo3::exceptions::{PyConnectionError, PyTimeoutError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A frame of (x, y, z, intensity) points.
#[pyclass(name = "PointCloud", module = "pcselect", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPointCloud(pcselect_core::PointCloud);

#[pymethods]
impl PyPointCloud {
    #[new]
    #[pyo3(signature = (points, frame_id = String::new()))]
    fn new(points: Vec<(f32, f32, f32, f32)>, frame_id: String) -> PyResult<Self> {
        let pts = points
            .into_iter()
            .map(|(x, y, z, i)| pcselect_core::Point::new(x, y, z, i))
            .collect();
        pcselect_core::PointCloud::new(frame_id, pts)
            .map(Self)
            .map_err(value_err)
    }

    /// Parses KITTI velodyne bytes.
    #[staticmethod]
    #[pyo3(signature = (data, frame_id = String::new()))]
    fn from_bytes(data: &[u8], frame_id: String) -> PyResult<Self> {
        kitti::read_velodyne_bin(frame_id, data).map(Self).map_err(value_err)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &kitti::write_velodyne_bin(&self.0))
    }

    fn points(&self) -> Vec<(f32, f32, f32, f32)> {
        self.0.points().iter().map(|p| (p.x, p.y, p.z, p.intensity)).collect()
    }

    #[getter]
    fn frame_id(&self) -> &str {
        self.0.frame_id()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("PointCloud(frame_id={:?}, points={})", self.0.frame_id(), self.0.len())
    }
}

/// Yaw-rotated cuboid in the sensor frame.
#[pyclass(name = "OrientedBox3D", module = "pcselect", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyBox(pcselect_core::OrientedBox3D);

#[pymethods]
impl PyBox {
    #[new]
    fn new(center: [f64; 3], dims: [f64; 3], yaw: f64) -> PyResult<Self> {
        pcselect_core::OrientedBox3D::new(center, dims, yaw)
            .map(Self)
            .map_err(value_err)
    }

    #[getter]
    fn center(&self) -> [f64; 3] {
        self.0.center()
    }

    #[getter]
    fn dims(&self) -> [f64; 3] {
        self.0.dims()
    }

    #[getter]
    fn yaw(&self) -> f64 {
        self.0.yaw()
    }

    fn volume(&self) -> f64 {
        self.0.volume()
    }

    fn __repr__(&self) -> String {
        format!(
            "OrientedBox3D(center={:?}, dims={:?}, yaw={})",
            self.0.center(),
            self.0.dims(),
            self.0.yaw()
        )
    }
}

/// A catalog of trained models.
#[pyclass(name = "ModelRegistry", module = "pcselect", frozen)]
struct PyRegistry(registry::ModelRegistry);

#[pymethods]
impl PyRegistry {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        registry::parse_registry(text).map(Self).map_err(value_err)
    }

    /// The bundled KITTI registry.
    #[staticmethod]
    fn kitti_fixture() -> Self {
        Self(registry::ModelRegistry::kitti_fixture())
    }

    fn model_ids(&self) -> Vec<String> {
        self.0.models().iter().map(|m| m.model_id.clone()).collect()
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Outcome of a selection: model id plus the audit trail.
#[pyclass(name = "Selection", module = "pcselect", frozen, get_all)]
struct PySelection {
    model_id: String,
    method_id: String,
    trace: Vec<String>,
}

#[pymethods]
impl PySelection {
    fn __repr__(&self) -> String {
        format!("Selection(model_id={:?})", self.model_id)
    }
}

#[pyfunction]
fn voxel_grid_filter(cloud: &PyPointCloud, edge: f64) -> PyResult<PyPointCloud> {
    degrade::voxel_grid_filter(&cloud.0, edge)
        .map(PyPointCloud)
        .map_err(value_err)
}

#[pyfunction]
fn uniform_sample(cloud: &PyPointCloud, edge: f64) -> PyResult<PyPointCloud> {
    degrade::uniform_sample(&cloud.0, edge)
        .map(PyPointCloud)
        .map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (cloud, keep_fraction, seed = 0))]
fn random_sample(cloud: &PyPointCloud, keep_fraction: f64, seed: u64) -> PyResult<PyPointCloud> {
    degrade::random_sample(&cloud.0, keep_fraction, seed)
        .map(PyPointCloud)
        .map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (cloud, sigma, seed = 0))]
fn add_gaussian_noise(cloud: &PyPointCloud, sigma: f64, seed: u64) -> PyResult<PyPointCloud> {
    degrade::add_gaussian_noise(&cloud.0, sigma, seed)
        .map(PyPointCloud)
        .map_err(value_err)
}

#[pyfunction]
fn normalized_point_count(before: &PyPointCloud, after: &PyPointCloud) -> PyResult<f64> {
    degrade::normalized_point_count(&before.0, &after.0).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (cloud, neighbors = features::DEFAULT_NEIGHBORS))]
fn estimate_noise_sigma(py: Python<'_>, cloud: &PyPointCloud, neighbors: usize) -> PyResult<f64> {
    py.detach(|| features::estimate_noise_sigma(&cloud.0, neighbors))
        .map_err(value_err)
}

#[pyfunction]
fn rotated_iou_3d(a: &PyBox, b: &PyBox) -> f64 {
    eval::rotated_iou_3d(&a.0, &b.0)
}

/// AP over 40 recall positions from `(score, is_true_positive)` pairs.
#[pyfunction]
fn average_precision_r40(scored: Vec<(f64, bool)>, total_gt: usize) -> f64 {
    let labelled: Vec<(f64, MatchLabel)> = scored
        .into_iter()
        .map(|(s, tp)| {
            let label = if tp {
                MatchLabel::TruePositive
            } else {
                MatchLabel::FalsePositive
            };
            (s, label)
        })
        .collect();
    eval::average_precision_r40(&labelled, total_gt)
}

/// Runs the selection flowchart over already-extracted data features.
#[pyfunction]
#[pyo3(signature = (classes, normalized_point_count, noise_sigma = None, latency_budget_s = None, registry = None))]
fn select(
    classes: Vec<String>,
    normalized_point_count: f64,
    noise_sigma: Option<f64>,
    latency_budget_s: Option<f64>,
    registry: Option<&PyRegistry>,
) -> PyResult<PySelection> {
    let fixture;
    let reg = match registry {
        Some(r) => &r.0,
        None => {
            fixture = registry::ModelRegistry::kitti_fixture();
            &fixture
        }
    };
    let target = TargetData {
        target_classes: classes,
        latency_budget_s,
    };
    let features = DataFeatures {
        normalized_point_count,
        noise_sigma,
        frames_analyzed: 0,
    };
    let d = selector::select(
        &target,
        &features,
        reg,
        &SelectionThresholds::default(),
        &SizeTable::default(),
    )
    .map_err(value_err)?;
    Ok(PySelection {
        model_id: d.chosen.model_id,
        method_id: d.chosen.features.method_id,
        trace: d.branch_trace.iter().map(ToString::to_string).collect(),
    })
}

/// Asks a selection server at `host` (`addr:port`) for a model.
#[pyfunction]
#[pyo3(signature = (host, classes, frames, latency_budget_s = None, declared_noise_sigma = None, timeout_s = 30.0))]
fn request_selection(
    py: Python<'_>,
    host: String,
    classes: Vec<String>,
    frames: Vec<PyRef<'_, PyPointCloud>>,
    latency_budget_s: Option<f64>,
    declared_noise_sigma: Option<f64>,
    timeout_s: f64,
) -> PyResult<PySelection> {
    let clouds: Vec<_> = frames.iter().map(|f| f.0.clone()).collect();
    let target = TargetData {
        target_classes: classes,
        latency_budget_s,
    };
    let request = protocol::build_request(&target, &clouds, declared_noise_sigma);
    let config = ClientConfig {
        timeout: Duration::try_from_secs_f64(timeout_s).map_err(value_err)?,
        ..ClientConfig::default()
    };
    let reply = py.detach(|| protocol::edge_session(&TcpConnector::new(host), &request, &config));
    match reply {
        Ok(a) => Ok(PySelection {
            model_id: a.model_id,
            method_id: a.features.method_id,
            trace: a.branch_trace.iter().map(ToString::to_string).collect(),
        }),
        Err(ClientError::Timeout) => Err(PyTimeoutError::new_err("selection timed out")),
        Err(e @ ClientError::Rejected { .. }) => Err(value_err(e)),
        Err(e) => Err(PyConnectionError::new_err(e.to_string())),
    }
}

/// Encoded Ack frame; handy for checking the wire format from Python.
#[pyfunction]
fn encode_ack<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
    let bytes = protocol::encode(&WireMessage::Ack).map_err(value_err)?;
    Ok(PyBytes::new(py, &bytes))
}

/// Seeded synthetic frame: the cloud and its KITTI label text.
#[pyfunction]
#[pyo3(signature = (seed, frame_id = "000000".to_string()))]
fn synthetic_frame(seed: u64, frame_id: String) -> (PyPointCloud, String) {
    let f = synth::synthetic_frame(seed, &frame_id, &synth::SceneConfig::default());
    (PyPointCloud(f.cloud), kitti::write_labels(&f.labels))
}

/// Runs the clustering baseline; returns `(class, box, score)` triples.
#[pyfunction]
fn detect_baseline(py: Python<'_>, cloud: &PyPointCloud) -> Vec<(String, PyBox, f64)> {
    let dets = py.detach(|| BaselineDetector::default().detect(&cloud.0));
    dets.into_iter()
        .map(|d| (d.class_name, PyBox(d.bbox), d.score))
        .collect()
}

/// Bird's-eye-view SVG of a cloud with `(class, box, score)` detections.
#[pyfunction]
#[pyo3(signature = (cloud, detections, ground_truth = None))]
fn render_bev(cloud: &PyPointCloud, detections: Vec<(String, PyBox, f64)>, ground_truth: Option<Vec<PyBox>>) -> String {
    let dets: Vec<eval::Detection> = detections
        .into_iter()
        .map(|(class_name, b, score)| eval::Detection {
            bbox: b.0,
            class_name,
            score,
        })
        .collect();
    let gts: Option<Vec<_>> = ground_truth.map(|g| g.into_iter().map(|b| b.0).collect());
    render_bev_svg(&cloud.0, &dets, gts.as_deref())
}

#[pymodule]
fn pcselect(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPointCloud>()?;
    m.add_class::<PyBox>()?;
    m.add_class::<PyRegistry>()?;
    m.add_class::<PySelection>()?;
    m.add_function(wrap_pyfunction!(voxel_grid_filter, m)?)?;
    m.add_function(wrap_pyfunction!(uniform_sample, m)?)?;
    m.add_function(wrap_pyfunction!(random_sample, m)?)?;
    m.add_function(wrap_pyfunction!(add_gaussian_noise, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_point_count, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_noise_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(rotated_iou_3d, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision_r40, m)?)?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(request_selection, m)?)?;
    m.add_function(wrap_pyfunction!(encode_ack, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_frame, m)?)?;
    m.add_function(wrap_pyfunction!(detect_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(render_bev, m)?)?;
    Ok(())
}
