//! Python bindings: dataset preparation, training, prediction, metrics and
//! benchmarking over the `pishgu` core.

use std::path::PathBuf;

use pishgu::bench::{bench_forward, throughput_fps as fps_of, BenchReport};
use pishgu::data::{
    prepare_scene, split_dataset, synth_scene_with, DatasetSpec, SceneKind, SplitPolicy, SynthOptions, TrackPoint,
    WindowedDataset,
};
use pishgu::metrics::{self, MetricReport};
use pishgu::model::{load_checkpoint, predict_absolute, save_checkpoint, ModelConfig, ModelParams};
use pishgu::numerics::Tensor;
use pishgu::training::{self, TrainConfig};
use pishgu::Error;
use pyo3::exceptions::{PyFileNotFoundError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

/// `(frame_id, subject_id, x, y)`, the row layout of a track CSV.
type TrackRow = (u64, u64, f64, f64);

/// `(scene, anchor_frame, subject_id, predicted points)`.
type Prediction = (String, u64, u64, Vec<(f64, f64)>);

/// `(epoch, train_loss, val_loss)`.
type HistoryRow = (usize, f64, Option<f64>);

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => PyFileNotFoundError::new_err(msg),
        Error::Io { .. } => PyOSError::new_err(msg),
        Error::Config { .. } | Error::Parse { .. } | Error::Format(_) => PyValueError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

fn trajectories(rows: &[Vec<(f64, f64)>]) -> pishgu::Result<Tensor> {
    let t = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != t) {
        return Err(Error::Contract("every trajectory needs the same length".into()));
    }
    let data = rows.iter().flatten().flat_map(|&(x, y)| [x, y]).collect();
    Tensor::new([rows.len(), t, 2], data)
}

fn metric_dict<'py>(py: Python<'py>, r: &MetricReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("ade", r.ade)?;
    d.set_item("fde", r.fde)?;
    d.set_item("rmse_per_second", r.rmse_per_second.clone())?;
    d.set_item("n_subjects", r.n_subjects)?;
    d.set_item("units", r.units.as_str())?;
    Ok(d)
}

fn bench_dict<'py>(py: Python<'py>, r: &BenchReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("latency_ms_mean", r.latency_ms_mean)?;
    d.set_item("latency_ms_std", r.latency_ms_std)?;
    d.set_item("samples_per_frame", r.samples_per_frame)?;
    d.set_item("fps", r.fps)?;
    d.set_item("warmup_reps", r.warmup_reps)?;
    d.set_item("measured_reps", r.measured_reps)?;
    Ok(d)
}

#[pyclass(name = "DatasetSpec", module = "pishgu_py", skip_from_py_object)]
#[derive(Clone)]
struct PySpec(DatasetSpec);

#[pymethods]
impl PySpec {
    /// A named preset, optionally with different window lengths.
    #[new]
    #[pyo3(signature = (preset = "vehicle", t_in = None, t_out = None))]
    fn new(preset: &str, t_in: Option<usize>, t_out: Option<usize>) -> PyResult<Self> {
        let mut spec = DatasetSpec::preset(preset).map_err(py_err)?;
        spec.t_in = t_in.unwrap_or(spec.t_in);
        spec.t_out = t_out.unwrap_or(spec.t_out);
        spec.validate().map_err(py_err)?;
        Ok(Self(spec))
    }

    #[getter]
    fn name(&self) -> &str {
        &self.0.name
    }

    #[getter]
    fn t_in(&self) -> usize {
        self.0.t_in
    }

    #[getter]
    fn t_out(&self) -> usize {
        self.0.t_out
    }

    #[getter]
    fn native_fps(&self) -> f64 {
        self.0.native_fps
    }

    #[getter]
    fn target_fps(&self) -> f64 {
        self.0.target_fps
    }

    #[getter]
    fn units(&self) -> &'static str {
        self.0.units.as_str()
    }

    /// Native frame ids between consecutive samples.
    fn frame_stride(&self) -> PyResult<u64> {
        self.0.frame_stride().map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "DatasetSpec(name={:?}, t_in={}, t_out={}, target_fps={})",
            self.0.name, self.0.t_in, self.0.t_out, self.0.target_fps
        )
    }
}

/// Synthetic tracks as `(frame_id, subject_id, x, y)` rows.
#[pyfunction]
#[pyo3(signature = (kind = "constant_velocity", n_subjects = 5, n_frames = 43, seed = 0, frame_step = 1, scale = 1.0, noise_std = 0.0))]
fn synth_tracks(
    kind: &str,
    n_subjects: usize,
    n_frames: usize,
    seed: u64,
    frame_step: u64,
    scale: f64,
    noise_std: f64,
) -> PyResult<Vec<TrackRow>> {
    let kind: SceneKind = kind.parse().map_err(py_err)?;
    let opts = SynthOptions {
        frame_step,
        scale,
        noise_std,
        ..SynthOptions::new(kind, n_subjects, n_frames, seed)
    };
    let tracks = synth_scene_with(&opts).map_err(py_err)?;
    Ok(tracks.iter().map(|p| (p.frame_id, p.subject_id, p.x, p.y)).collect())
}

#[pyclass(name = "Dataset", module = "pishgu_py", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset(WindowedDataset);

#[pymethods]
impl PyDataset {
    /// Windows `(frame_id, subject_id, x, y)` rows into frame samples.
    #[staticmethod]
    #[pyo3(signature = (tracks, spec, stride = 1, scene = "scene"))]
    fn prepare(tracks: Vec<TrackRow>, spec: &PySpec, stride: usize, scene: &str) -> PyResult<Self> {
        let points: Vec<TrackPoint> = tracks
            .into_iter()
            .map(|(frame_id, subject_id, x, y)| TrackPoint { frame_id, subject_id, x, y })
            .collect();
        let frames = prepare_scene(&points, &spec.0, stride, scene).map_err(py_err)?;
        Ok(Self(WindowedDataset {
            spec: spec.0.clone(),
            frames,
        }))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        WindowedDataset::load(&path).map(Self).map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(&path).map_err(py_err)
    }

    #[getter]
    fn spec(&self) -> PySpec {
        PySpec(self.0.spec.clone())
    }

    #[getter]
    fn n_windows(&self) -> usize {
        self.0.n_windows()
    }

    /// `(train, val, test)` under `policy`: `"0.7,0.1,0.2"`, `"loo:<scene>"` or `"all"`.
    fn split(&self, policy: &str) -> PyResult<(Self, Self, Self)> {
        let policy: SplitPolicy = policy.parse().map_err(py_err)?;
        let s = split_dataset(&self.0.frames, &policy).map_err(py_err)?;
        let part = |frames| {
            Self(WindowedDataset {
                spec: self.0.spec.clone(),
                frames,
            })
        };
        Ok((part(s.train), part(s.val), part(s.test)))
    }

    fn __len__(&self) -> usize {
        self.0.frames.len()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(frames={}, windows={})", self.0.frames.len(), self.0.n_windows())
    }
}

#[pyclass(name = "Model", module = "pishgu_py", skip_from_py_object)]
#[derive(Clone)]
struct PyModel(ModelParams);

#[pymethods]
impl PyModel {
    /// Freshly initialized default-width model for the given windows.
    #[new]
    #[pyo3(signature = (t_in = 15, t_out = 25, seed = 0))]
    fn new(t_in: usize, t_out: usize, seed: u64) -> PyResult<Self> {
        ModelParams::init(ModelConfig::for_windows(t_in, t_out), seed)
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_checkpoint(&path).map(Self).map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&path, &self.0).map_err(py_err)
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.0.parameter_count()
    }

    #[getter]
    fn t_in(&self) -> usize {
        self.0.config.t_in
    }

    #[getter]
    fn t_out(&self) -> usize {
        self.0.config.t_out
    }

    /// Predicted futures in dataset coordinates, one
    /// `(scene, anchor_frame, subject_id, [(x, y), ...])` per window.
    fn predict(&self, dataset: &PyDataset) -> PyResult<Vec<Prediction>> {
        let t_out = self.0.config.t_out;
        let mut out = Vec::new();
        for frame in dataset.0.frames.iter().filter(|f| !f.is_empty()) {
            let pred = predict_absolute(frame, &self.0).map_err(py_err)?;
            for (w, rows) in frame.windows.iter().zip(pred.data().chunks_exact(2 * t_out)) {
                let points = rows.chunks_exact(2).map(|p| (p[0], p[1])).collect();
                out.push((frame.scene.clone(), frame.anchor_frame, w.subject_id, points));
            }
        }
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(t_in={}, t_out={}, parameters={})",
            self.0.config.t_in,
            self.0.config.t_out,
            self.0.parameter_count()
        )
    }
}

/// Trains a default-width model; returns it with `(epoch, train_loss,
/// val_loss)` rows. Unset options take the dataset domain's defaults.
#[pyfunction]
#[pyo3(signature = (dataset, val = None, epochs = None, learning_rate = None, seed = None, gradient_clip = None))]
fn train(
    py: Python<'_>,
    dataset: &PyDataset,
    val: Option<&PyDataset>,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    seed: Option<u64>,
    gradient_clip: Option<f64>,
) -> PyResult<(PyModel, Vec<HistoryRow>)> {
    let spec = &dataset.0.spec;
    let mut cfg = TrainConfig::for_domain(spec.domain);
    cfg.epochs = epochs.unwrap_or(cfg.epochs);
    cfg.learning_rate = learning_rate.unwrap_or(cfg.learning_rate);
    cfg.seed = seed.unwrap_or(cfg.seed);
    cfg.gradient_clip = gradient_clip.or(cfg.gradient_clip);
    let model_cfg = ModelConfig::for_windows(spec.t_in, spec.t_out);
    let val_frames = val.map(|v| v.0.frames.clone()).unwrap_or_default();
    let train_frames = &dataset.0.frames;
    let (params, history) = py
        .detach(|| training::train(train_frames, &val_frames, model_cfg, &cfg))
        .map_err(py_err)?;
    let rows = history.iter().map(|h| (h.epoch, h.train_loss, h.val_loss)).collect();
    Ok((PyModel(params), rows))
}

/// Displacement metrics of `model` on `dataset`, in the dataset's units.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, model: &PyModel, dataset: &PyDataset) -> PyResult<Bound<'py, PyDict>> {
    let report = training::evaluate(&dataset.0.frames, &model.0, &dataset.0.spec).map_err(py_err)?;
    metric_dict(py, &report)
}

/// The same metrics for the constant-velocity baseline.
#[pyfunction]
fn evaluate_constant_velocity<'py>(py: Python<'py>, dataset: &PyDataset) -> PyResult<Bound<'py, PyDict>> {
    let report = training::evaluate_constant_velocity(&dataset.0.frames, &dataset.0.spec).map_err(py_err)?;
    metric_dict(py, &report)
}

/// Average displacement error between equal-shape lists of trajectories.
#[pyfunction]
fn ade(truth: Vec<Vec<(f64, f64)>>, pred: Vec<Vec<(f64, f64)>>) -> PyResult<f64> {
    let (t, p) = (trajectories(&truth).map_err(py_err)?, trajectories(&pred).map_err(py_err)?);
    metrics::ade(&t, &p).map_err(py_err)
}

/// Final displacement error between equal-shape lists of trajectories.
#[pyfunction]
fn fde(truth: Vec<Vec<(f64, f64)>>, pred: Vec<Vec<(f64, f64)>>) -> PyResult<f64> {
    let (t, p) = (trajectories(&truth).map_err(py_err)?, trajectories(&pred).map_err(py_err)?);
    metrics::fde(&t, &p).map_err(py_err)
}

#[pyfunction]
fn throughput_fps(latency_ms: f64, samples_per_frame: f64) -> f64 {
    fps_of(latency_ms, samples_per_frame)
}

/// Per-sample latency and frame throughput of `model` over `dataset`.
#[pyfunction(name = "bench")]
#[pyo3(signature = (model, dataset, warmup = 5, reps = 30))]
fn run_bench<'py>(
    py: Python<'py>,
    model: &PyModel,
    dataset: &PyDataset,
    warmup: usize,
    reps: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let frames: Vec<_> = dataset.0.frames.iter().filter(|f| !f.is_empty()).cloned().collect();
    let params = &model.0;
    let report = py.detach(|| bench_forward(params, &frames, warmup, reps)).map_err(py_err)?;
    bench_dict(py, &report)
}

#[pymodule]
fn pishgu_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpec>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(synth_tracks, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_constant_velocity, m)?)?;
    m.add_function(wrap_pyfunction!(ade, m)?)?;
    m.add_function(wrap_pyfunction!(fde, m)?)?;
    m.add_function(wrap_pyfunction!(throughput_fps, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    Ok(())
}
