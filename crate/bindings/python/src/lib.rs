//! Python module `topoloss`: `topo_weight`, `rips_diagram` and
//! `diagram_distance` over NumPy arrays. Arrays are read in place when
//! contiguous, and the interpreter lock is released while computing.

use numpy::{PyArray2, PyReadonlyArray2, PyUntypedArrayMethods};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use topoloss::buffers;
use topoloss::{Error, GroundMetric, LossConfig, RipsConfig};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Training(_) | Error::Io { .. } => PyRuntimeError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn shape(a: &impl PyUntypedArrayMethods) -> (usize, usize) {
    let s = a.shape();
    (s[0], s[1])
}

fn metric(name: &str) -> PyResult<GroundMetric> {
    match name {
        "linf" => Ok(GroundMetric::LInf),
        "l2" => Ok(GroundMetric::L2),
        other => Err(PyValueError::new_err(format!("unknown metric {other:?}"))),
    }
}

/// Weight of a posterior map against a 0/1 uint8 mask, both `(H, W)`.
/// Returns a dict with `omega`, `d0`, `d1` and `branch`.
#[pyfunction]
#[pyo3(signature = (gt, pred, threshold=0.5, gv_area_threshold=1500, q=2.0, metric_name="linf", max_points=128))]
#[allow(clippy::too_many_arguments)]
fn topo_weight<'py>(
    py: Python<'py>,
    gt: PyReadonlyArray2<'py, u8>,
    pred: PyReadonlyArray2<'py, f64>,
    threshold: f64,
    gv_area_threshold: usize,
    q: f64,
    metric_name: &str,
    max_points: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let mut config = LossConfig {
        prob_threshold: threshold,
        gv_area_threshold,
        wasserstein_q: q,
        ground_metric: metric(metric_name)?,
        ..LossConfig::default()
    };
    config.rips.max_points = max_points;
    let (gt_shape, pred_shape) = (shape(&gt), shape(&pred));
    let gt = gt.as_slice()?;
    let pred = pred.as_slice()?;
    let w = py
        .allow_threads(|| buffers::topo_weight(gt, gt_shape, pred, pred_shape, &config))
        .map_err(to_py)?;
    let out = PyDict::new_bound(py);
    out.set_item("omega", w.omega)?;
    out.set_item("d0", w.d0)?;
    out.set_item("d1", w.d1)?;
    out.set_item("branch", format!("{:?}", w.branch))?;
    Ok(out)
}

/// Diagram of an `(N, 2)` float array as an `(M, 2)` array of
/// `(birth, death)`; essential classes have death `inf`.
#[pyfunction]
#[pyo3(signature = (cloud, degree, max_points=128))]
fn rips_diagram<'py>(
    py: Python<'py>,
    cloud: PyReadonlyArray2<'py, f64>,
    degree: u8,
    max_points: usize,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    if shape(&cloud).1 != 2 {
        return Err(PyValueError::new_err("cloud must have shape (N, 2)"));
    }
    let config = RipsConfig {
        max_points,
        ..RipsConfig::default()
    };
    let xy = cloud.as_slice()?;
    let flat = py
        .allow_threads(|| buffers::rips_pairs(xy, degree, &config))
        .map_err(to_py)?;
    let rows: Vec<Vec<f64>> = flat.chunks_exact(2).map(<[f64]>::to_vec).collect();
    if rows.is_empty() {
        return Ok(PyArray2::zeros_bound(py, [0, 2], false));
    }
    PyArray2::from_vec2_bound(py, &rows).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Distance between two `(M, 2)` diagrams: Wasserstein with power `q`, or
/// bottleneck when `bottleneck` is true.
#[pyfunction]
#[pyo3(signature = (a, b, q=2.0, metric_name="linf", bottleneck=false))]
fn diagram_distance<'py>(
    py: Python<'py>,
    a: PyReadonlyArray2<'py, f64>,
    b: PyReadonlyArray2<'py, f64>,
    q: f64,
    metric_name: &str,
    bottleneck: bool,
) -> PyResult<f64> {
    let m = metric(metric_name)?;
    let (a, b) = (a.as_slice()?, b.as_slice()?);
    py.allow_threads(|| {
        if bottleneck {
            buffers::bottleneck_distance(a, b)
        } else {
            buffers::wasserstein_distance(a, b, q, m)
        }
    })
    .map_err(to_py)
}

#[pymodule]
fn topoloss(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(topo_weight, m)?)?;
    m.add_function(wrap_pyfunction!(rips_diagram, m)?)?;
    m.add_function(wrap_pyfunction!(diagram_distance, m)?)?;
    Ok(())
}
