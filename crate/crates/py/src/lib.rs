//! Python bindings. Structured results (manifests, labels, reports) cross
//! the boundary as JSON and come back as plain dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyFileNotFoundError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use ul::blocks::{find_cycles, CycleMode};
use ul::export::{export_opendrive, read_graph_json, write_graph_json};
use ul::geo::Point2;
use ul::labels::{classify_tile, render_text, Thresholds, TileStats};
use ul::metrics::{self, TrafficParams, UnreachablePairs};
use ul::pipeline::{run_pipeline, run_stage, PipelineConfig, Stage};
use ul::raster::Mask;
use ul::roadgraph::{self, NodeId};
use ul::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::MissingInput(_) => PyFileNotFoundError::new_err(e.to_string()),
        Error::Config(_) | Error::Domain(_) | Error::UndefinedInput(_) | Error::DimensionMismatch { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_python<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_json<T: serde::de::DeserializeOwned>(value: serde_json::Value, what: &str) -> PyResult<T> {
    serde_json::from_value(value).map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

fn mask(rows: Vec<Vec<u8>>) -> PyResult<Mask> {
    if rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(PyValueError::new_err("mask rows differ in length"));
    }
    Ok(Mask::from_rows(&rows))
}

fn rows(m: &Mask) -> Vec<Vec<u8>> {
    (0..m.height())
        .map(|r| (0..m.width()).map(|c| m.get(c, r) as u8).collect())
        .collect()
}

fn points(pts: Vec<(f64, f64)>) -> Vec<Point2> {
    pts.into_iter().map(|(x, y)| Point2::new(x, y)).collect()
}

/// Undirected road graph in projected meters.
#[pyclass(name = "RoadGraph", module = "urbanlayout")]
#[derive(Default)]
struct PyRoadGraph {
    inner: roadgraph::RoadGraph,
}

#[pymethods]
impl PyRoadGraph {
    #[new]
    fn new() -> Self {
        Self::default()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyRoadGraph {
            inner: read_graph_json(text.as_bytes()).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> String {
        String::from_utf8(write_graph_json(&self.inner)).expect("graph JSON is UTF-8")
    }

    fn add_node(&mut self, id: NodeId, x: f64, y: f64) {
        self.inner.add_node(id, Point2::new(x, y));
    }

    #[pyo3(signature = (u, v, class_="RoadS"))]
    fn add_edge(&mut self, u: NodeId, v: NodeId, class_: &str) -> PyResult<()> {
        let class = class_.parse().map_err(to_py)?;
        self.inner.add_straight_edge(u, v, class).map_err(to_py)
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    #[getter]
    fn total_length(&self) -> f64 {
        self.inner.total_length()
    }

    fn degree(&self, id: NodeId) -> usize {
        self.inner.degree(id)
    }

    #[pyo3(signature = (c_tr=roadgraph::DEFAULT_C_TR))]
    fn simplify(&self, c_tr: f64) -> Self {
        PyRoadGraph {
            inner: roadgraph::simplify(&self.inner, c_tr),
        }
    }

    #[pyo3(signature = (eps_m=roadgraph::DEFAULT_MERGE_EPS_M))]
    fn merge_close_nodes(&self, eps_m: f64) -> Self {
        PyRoadGraph {
            inner: roadgraph::merge_close_nodes(&self.inner, eps_m),
        }
    }

    /// Cycles as node-id lists, each starting at its smallest id.
    #[pyo3(signature = (cutoff=12, mode="peeling"))]
    fn cycles(&self, cutoff: usize, mode: &str) -> PyResult<Vec<Vec<NodeId>>> {
        let mode: CycleMode = from_json(serde_json::json!(mode), "mode")?;
        Ok(find_cycles(&self.inner, cutoff, mode)
            .into_iter()
            .map(|c| c.node_ids)
            .collect())
    }

    #[pyo3(signature = (bins=metrics::DEFAULT_BEARING_BINS))]
    fn orientation_entropy(&self, bins: usize) -> PyResult<f64> {
        metrics::orientation_entropy(&self.inner, bins).map_err(to_py)
    }

    #[pyo3(signature = (min_dist_m=metrics::DEFAULT_MIN_PAIR_DIST_M, skip_unreachable=false))]
    fn traffic_convenience(&self, py: Python<'_>, min_dist_m: f64, skip_unreachable: bool) -> PyResult<f64> {
        let params = TrafficParams {
            min_dist_m,
            unreachable: if skip_unreachable {
                UnreachablePairs::Skip
            } else {
                UnreachablePairs::Zero
            },
        };
        py.detach(|| metrics::traffic_convenience(&self.inner, &params))
            .map_err(to_py)
    }

    #[pyo3(signature = (other, spacing_m=metrics::DEFAULT_SAMPLE_SPACING_M))]
    fn chamfer(&self, other: &PyRoadGraph, spacing_m: f64) -> PyResult<f64> {
        metrics::graph_chamfer(&self.inner, &other.inner, spacing_m).map_err(to_py)
    }

    fn to_opendrive(&self) -> String {
        export_opendrive(&self.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.node_count()
    }

    fn __repr__(&self) -> String {
        format!(
            "RoadGraph(nodes={}, edges={})",
            self.inner.node_count(),
            self.inner.edge_count()
        )
    }
}

/// Symmetric mean nearest-neighbour distance between two point sets.
#[pyfunction]
fn chamfer_distance(a: Vec<(f64, f64)>, b: Vec<(f64, f64)>) -> PyResult<f64> {
    metrics::chamfer_distance(&points(a), &points(b)).map_err(to_py)
}

#[pyfunction]
fn wasserstein_1d(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    metrics::wasserstein_1d(&a, &b).map_err(to_py)
}

/// Masks are lists of rows of 0/1 values.
#[pyfunction]
fn mean_iou(a: Vec<Vec<u8>>, b: Vec<Vec<u8>>) -> PyResult<f64> {
    metrics::mean_iou(&mask(a)?, &mask(b)?).map_err(to_py)
}

#[pyfunction]
fn cl_dice(pred: Vec<Vec<u8>>, truth: Vec<Vec<u8>>) -> PyResult<f64> {
    metrics::cl_dice(&mask(pred)?, &mask(truth)?).map_err(to_py)
}

#[pyfunction]
fn frechet_distance(mu1: Vec<f64>, sigma1: Vec<Vec<f64>>, mu2: Vec<f64>, sigma2: Vec<Vec<f64>>) -> PyResult<f64> {
    metrics::frechet_distance(&mu1, &sigma1, &mu2, &sigma2).map_err(to_py)
}

#[pyfunction]
fn thin(m: Vec<Vec<u8>>) -> PyResult<Vec<Vec<u8>>> {
    Ok(rows(&ul::raster::thin(&mask(m)?)))
}

/// Labels for one tile; `thresholds` is an optional dict overriding the defaults.
#[pyfunction]
#[pyo3(signature = (road_len_km, entropy_nats, built_fraction, mean_height_m, thresholds=None))]
fn label_tile<'py>(
    py: Python<'py>,
    road_len_km: f64,
    entropy_nats: Option<f64>,
    built_fraction: f64,
    mean_height_m: Option<f64>,
    thresholds: Option<Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let th: Thresholds = match thresholds {
        Some(obj) => {
            let text: String = py.import("json")?.call_method1("dumps", (obj,))?.extract()?;
            let value = serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
            from_json(value, "thresholds")?
        }
        None => Thresholds::default(),
    };
    th.validate().map_err(to_py)?;
    let stats = TileStats {
        road_len_km,
        entropy_nats,
        built_fraction,
        mean_height_m,
    };
    let labels = classify_tile(&stats, &th);
    let out = to_python(py, &labels)?;
    out.set_item("text", render_text(&labels))?;
    Ok(out)
}

fn config(path: Option<PathBuf>, overrides: Vec<String>) -> PyResult<PipelineConfig> {
    PipelineConfig::load(path.as_deref(), &overrides).map_err(to_py)
}

/// Runs every stage; returns the stage manifests.
#[pyfunction]
#[pyo3(signature = (config_path=None, overrides=Vec::new()))]
fn run<'py>(py: Python<'py>, config_path: Option<PathBuf>, overrides: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config(config_path, overrides)?;
    let manifests = py.detach(|| run_pipeline(&cfg)).map_err(to_py)?;
    to_python(py, &manifests)
}

/// Runs a single stage by name (`ingest`, `heights`, ..., `export`).
#[pyfunction]
#[pyo3(signature = (stage, config_path=None, overrides=Vec::new()))]
fn run_one<'py>(
    py: Python<'py>,
    stage: &str,
    config_path: Option<PathBuf>,
    overrides: Vec<String>,
) -> PyResult<Bound<'py, PyAny>> {
    let stage: Stage = from_json(serde_json::json!(stage), "stage")?;
    let cfg = config(config_path, overrides)?;
    let manifest = py.detach(|| run_stage(stage, &cfg)).map_err(to_py)?;
    to_python(py, &manifest)
}

/// Writes the synthetic test city into `dir`.
#[pyfunction]
fn write_synthetic_city(dir: PathBuf) -> PyResult<()> {
    ul::fixture::write_synthetic_city(&dir).map_err(to_py)
}

#[pymodule]
fn urbanlayout(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRoadGraph>()?;
    m.add_function(wrap_pyfunction!(chamfer_distance, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein_1d, m)?)?;
    m.add_function(wrap_pyfunction!(mean_iou, m)?)?;
    m.add_function(wrap_pyfunction!(cl_dice, m)?)?;
    m.add_function(wrap_pyfunction!(frechet_distance, m)?)?;
    m.add_function(wrap_pyfunction!(thin, m)?)?;
    m.add_function(wrap_pyfunction!(label_tile, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_one, m)?)?;
    m.add_function(wrap_pyfunction!(write_synthetic_city, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
