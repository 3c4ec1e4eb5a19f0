//! Python bindings: template tensors, the three update rules, the tracker
//! with both protocols, the synthetic benchmark, training and the metrics.

use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use updatenet_core::bench::DriftBenchmark;
use updatenet_core::eval;
use updatenet_core::net::{init_params, InitScheme, UpdateNetParams};
use updatenet_core::strategy::{self, FusionWeights, LinearUpdateConfig, SkipSource, UpdateStrategy};
use updatenet_core::synth::SyntheticSequence;
use updatenet_core::tensor::{self, TemplateTensor};
use updatenet_core::tracker::{track_sequence, vot_run, SiameseTracker, TrackerConfig};
use updatenet_core::train::{run_multistage, TrainConfig};
use updatenet_core::{BBox, Error};

type Box4 = (f32, f32, f32, f32);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn bbox(b: Box4) -> BBox {
    BBox::new(b.0, b.1, b.2, b.3)
}

fn tuple(b: &BBox) -> Box4 {
    (b.x, b.y, b.w, b.h)
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

/// Feature tensor laid out row-major, channels innermost.
#[pyclass(name = "Tensor", module = "updatenet_py", from_py_object)]
#[derive(Clone)]
struct PyTensor {
    inner: TemplateTensor,
}

#[pymethods]
impl PyTensor {
    #[new]
    fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> PyResult<Self> {
        TemplateTensor::new(height, width, channels, data).map(|inner| Self { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn zeros(height: usize, width: usize, channels: usize) -> PyResult<Self> {
        TemplateTensor::zeros(height, width, channels).map(|inner| Self { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        TemplateTensor::load(path).map(|inner| Self { inner }).map_err(py_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        self.inner.shape()
    }

    #[getter]
    fn data(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn get(&self, row: usize, col: usize, channel: usize) -> PyResult<f32> {
        let (h, w, c) = self.inner.shape();
        if row >= h || col >= w || channel >= c {
            return Err(PyValueError::new_err(format!("index ({row}, {col}, {channel}) outside shape ({h}, {w}, {c})")));
        }
        Ok(self.inner.get(row, col, channel))
    }

    fn __len__(&self) -> usize {
        self.inner.data().len()
    }

    fn __repr__(&self) -> String {
        let (h, w, c) = self.inner.shape();
        format!("Tensor(shape=({h}, {w}, {c}))")
    }
}

fn skip_source(name: &str) -> PyResult<SkipSource> {
    name.parse().map_err(py_err)
}

/// Parameters of the per-position two-layer update network.
#[pyclass(name = "UpdateNet", module = "updatenet_py", from_py_object)]
#[derive(Clone)]
struct PyUpdateNet {
    inner: Arc<UpdateNetParams>,
}

#[pymethods]
impl PyUpdateNet {
    /// `init` is one of zeros, scaled_uniform, residual_zero, pass_through.
    #[new]
    #[pyo3(signature = (channels, hidden = 96, init = "residual_zero", seed = 0))]
    fn new(channels: usize, hidden: usize, init: &str, seed: u64) -> PyResult<Self> {
        if channels == 0 || hidden == 0 {
            return Err(PyValueError::new_err("channels and hidden must be positive"));
        }
        let scheme = match init {
            "zeros" => InitScheme::Zeros,
            "scaled_uniform" => InitScheme::ScaledUniform { seed },
            "residual_zero" => InitScheme::ResidualZero { seed },
            "pass_through" => InitScheme::PassThrough { seed },
            other => return Err(PyValueError::new_err(format!("unknown init scheme '{other}'"))),
        };
        Ok(Self { inner: Arc::new(init_params(channels, hidden, scheme)) })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        UpdateNetParams::load(path).map(|p| Self { inner: Arc::new(p) }).map_err(py_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels()
    }

    #[getter]
    fn hidden(&self) -> usize {
        self.inner.hidden()
    }

    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    /// Next accumulated template from the initial, previous and current ones.
    #[pyo3(signature = (t0, prev_accum, current, skip = "t0"))]
    fn update(&self, t0: &PyTensor, prev_accum: &PyTensor, current: &PyTensor, skip: &str) -> PyResult<PyTensor> {
        strategy::updatenet_update(&self.inner, skip_source(skip)?, &t0.inner, &prev_accum.inner, &current.inner)
            .map(|inner| PyTensor { inner })
            .map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("UpdateNet(channels={}, hidden={})", self.inner.channels(), self.inner.hidden())
    }
}

/// One of the template update rules the tracker can run with.
#[pyclass(name = "Strategy", module = "updatenet_py", from_py_object)]
#[derive(Clone)]
struct PyStrategy {
    inner: UpdateStrategy,
}

#[pymethods]
impl PyStrategy {
    #[staticmethod]
    fn none() -> Self {
        Self { inner: UpdateStrategy::None }
    }

    #[staticmethod]
    fn linear(gamma: f32) -> PyResult<Self> {
        UpdateStrategy::linear(gamma).map(|inner| Self { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn fusion(alpha_init: f32, alpha_accu: f32, alpha_curr: f32) -> PyResult<Self> {
        let w = FusionWeights::new(alpha_init, alpha_accu, alpha_curr).map_err(py_err)?;
        Ok(Self { inner: UpdateStrategy::Fusion(w) })
    }

    #[staticmethod]
    #[pyo3(signature = (net, skip = "t0"))]
    fn updatenet(net: &PyUpdateNet, skip: &str) -> PyResult<Self> {
        Ok(Self { inner: UpdateStrategy::UpdateNet { params: net.inner.clone(), skip: skip_source(skip)? } })
    }

    fn apply(&self, t0: &PyTensor, prev_accum: &PyTensor, current: &PyTensor) -> PyResult<PyTensor> {
        self.inner.apply(&t0.inner, &prev_accum.inner, &current.inner).map(|inner| PyTensor { inner }).map_err(py_err)
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label()
    }

    fn __repr__(&self) -> String {
        format!("Strategy({})", self.inner.label())
    }
}

/// Rendered frames with ground-truth boxes.
#[pyclass(name = "Sequence", module = "updatenet_py", from_py_object)]
#[derive(Clone)]
struct PySequence {
    inner: Arc<SyntheticSequence>,
}

#[pymethods]
impl PySequence {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn gt_boxes(&self) -> Vec<Box4> {
        self.inner.gt_boxes.iter().map(tuple).collect()
    }

    /// `(width, height, pixels)` of one frame, row-major in [0, 1].
    fn frame(&self, index: usize) -> PyResult<(usize, usize, Vec<f32>)> {
        let img = self.inner.frames.get(index).ok_or_else(|| PyValueError::new_err(format!("frame {index} out of range")))?;
        Ok((img.width(), img.height(), img.data().to_vec()))
    }

    fn __repr__(&self) -> String {
        format!("Sequence(frames={})", self.inner.len())
    }
}

/// Renders the drifting-appearance benchmark; `config` is a JSON object
/// overriding any of its fields.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn drift_benchmark(config: Option<&str>) -> PyResult<Vec<PySequence>> {
    let bench: DriftBenchmark = match config {
        Some(text) => parse_json(text, "benchmark config")?,
        None => DriftBenchmark::default(),
    };
    bench.validate().map_err(py_err)?;
    let seqs = bench.render().map_err(py_err)?;
    Ok(seqs.into_iter().map(|s| PySequence { inner: Arc::new(s) }).collect())
}

/// Cross-correlation tracker with a pluggable template update rule.
#[pyclass(name = "Tracker", module = "updatenet_py")]
struct PyTracker {
    inner: SiameseTracker,
}

#[pymethods]
impl PyTracker {
    #[new]
    #[pyo3(signature = (config = None))]
    fn new(config: Option<&str>) -> PyResult<Self> {
        let cfg: TrackerConfig = match config {
            Some(text) => parse_json(text, "tracker config")?,
            None => TrackerConfig::default(),
        };
        SiameseTracker::new(cfg).map(|inner| Self { inner }).map_err(py_err)
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels()
    }

    /// Exemplar features at every ground-truth box.
    fn gt_templates(&self, seq: &PySequence) -> PyResult<Vec<PyTensor>> {
        let ts = self.inner.gt_templates(seq.inner.as_ref()).map_err(py_err)?;
        Ok(ts.into_iter().map(|inner| PyTensor { inner }).collect())
    }

    /// One-pass tracking; returns boxes and per-frame overlaps.
    fn track<'py>(&self, py: Python<'py>, seq: &PySequence, strategy: &PyStrategy) -> PyResult<Bound<'py, PyDict>> {
        let r = track_sequence(seq.inner.as_ref(), &strategy.inner, &self.inner).map_err(py_err)?;
        let out = PyDict::new(py);
        out.set_item("boxes", r.boxes.iter().map(tuple).collect::<Vec<_>>())?;
        out.set_item("overlaps", r.overlaps.clone())?;
        out.set_item("mean_overlap", r.mean_overlap())?;
        Ok(out)
    }

    /// Reset-based protocol; skipped frames carry `None`.
    #[pyo3(signature = (seq, strategy, fail_threshold = 0.0))]
    fn vot<'py>(&self, py: Python<'py>, seq: &PySequence, strategy: &PyStrategy, fail_threshold: f32) -> PyResult<Bound<'py, PyDict>> {
        let r = vot_run(seq.inner.as_ref(), &strategy.inner, &self.inner, fail_threshold).map_err(py_err)?;
        let out = PyDict::new(py);
        out.set_item("boxes", r.boxes.iter().map(|b| b.as_ref().map(tuple)).collect::<Vec<_>>())?;
        out.set_item("overlaps", r.overlaps.clone())?;
        out.set_item("events", r.events.iter().map(|e| e.as_str()).collect::<Vec<_>>())?;
        out.set_item("failure_frames", r.failure_frames.clone())?;
        out.set_item("reinit_frames", r.reinit_frames.clone())?;
        let m = eval::vot_metrics(std::slice::from_ref(&r)).map_err(py_err)?;
        out.set_item("accuracy", m.accuracy)?;
        out.set_item("eao_lite", m.eao_lite)?;
        Ok(out)
    }
}

/// Multi-stage UpdateNet training. `config` is a JSON object merged over the
/// desk-scale defaults. Returns one dict per stage.
#[pyfunction]
#[pyo3(signature = (sequences, tracker, config = None))]
fn train<'py>(py: Python<'py>, sequences: Vec<PySequence>, tracker: &PyTracker, config: Option<&str>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut merged = serde_json::to_value(TrainConfig::desk()).map_err(|e| PyValueError::new_err(e.to_string()))?;
    if let Some(text) = config {
        let over: serde_json::Value = parse_json(text, "train config")?;
        match (merged.as_object_mut(), over.as_object()) {
            (Some(base), Some(over)) => base.extend(over.clone()),
            _ => return Err(PyValueError::new_err("train config must be a JSON object")),
        }
    }
    let cfg: TrainConfig = serde_json::from_value(merged).map_err(|e| PyValueError::new_err(format!("train config: {e}")))?;
    let seqs: Vec<SyntheticSequence> = sequences.iter().map(|s| s.inner.as_ref().clone()).collect();
    let outcomes = run_multistage(&seqs, &tracker.inner, &cfg, |_| Ok(())).map_err(py_err)?;
    outcomes
        .into_iter()
        .map(|o| {
            let d = PyDict::new(py);
            d.set_item("stage", o.stage)?;
            d.set_item("best_epoch", o.best_epoch)?;
            d.set_item("mean_mse", o.history.iter().map(|h| h.mean_mse).collect::<Vec<_>>())?;
            d.set_item("skip", o.best.skip.as_str())?;
            d.set_item("net", PyUpdateNet { inner: Arc::new(o.best.params) })?;
            Ok(d)
        })
        .collect()
}

#[pyfunction]
fn linear_update(prev_accum: &PyTensor, current: &PyTensor, gamma: f32) -> PyResult<PyTensor> {
    let cfg = LinearUpdateConfig::new(gamma).map_err(py_err)?;
    strategy::linear_update(&prev_accum.inner, &current.inner, cfg).map(|inner| PyTensor { inner }).map_err(py_err)
}

#[pyfunction]
fn weighted_fusion(t0: &PyTensor, prev_accum: &PyTensor, current: &PyTensor, weights: (f32, f32, f32)) -> PyResult<PyTensor> {
    let w = FusionWeights::new(weights.0, weights.1, weights.2).map_err(py_err)?;
    strategy::weighted_fusion(&t0.inner, &prev_accum.inner, &current.inner, w).map(|inner| PyTensor { inner }).map_err(py_err)
}

/// Valid-mode correlation; returns `(height, width, values)`.
#[pyfunction]
fn cross_correlate(template: &PyTensor, search: &PyTensor) -> PyResult<(usize, usize, Vec<f32>)> {
    let m = tensor::cross_correlate(&template.inner, &search.inner).map_err(py_err)?;
    Ok((m.height(), m.width(), m.data().to_vec()))
}

#[pyfunction]
fn l2_distance(a: &PyTensor, b: &PyTensor) -> PyResult<f64> {
    tensor::l2_distance(&a.inner, &b.inner).map_err(py_err)
}

/// Boxes are `(x, y, w, h)`.
#[pyfunction]
fn iou(a: Box4, b: Box4) -> PyResult<f32> {
    eval::iou(&bbox(a), &bbox(b)).map_err(py_err)
}

#[pyfunction]
fn success_auc(overlaps: Vec<f32>) -> f64 {
    eval::success_auc(&overlaps)
}

#[pyfunction]
fn eao_lite(accuracy: f64, failures_per_sequence: f64) -> f64 {
    eval::eao_lite(accuracy, failures_per_sequence)
}

#[pymodule]
fn updatenet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyUpdateNet>()?;
    m.add_class::<PyStrategy>()?;
    m.add_class::<PySequence>()?;
    m.add_class::<PyTracker>()?;
    m.add_function(wrap_pyfunction!(drift_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(linear_update, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_fusion, m)?)?;
    m.add_function(wrap_pyfunction!(cross_correlate, m)?)?;
    m.add_function(wrap_pyfunction!(l2_distance, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(success_auc, m)?)?;
    m.add_function(wrap_pyfunction!(eao_lite, m)?)?;
    Ok(())
}
