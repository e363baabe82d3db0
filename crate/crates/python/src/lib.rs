//! Python bindings. Geometries are built from `(width, x, layer)` tuples and
//! actions are `(x, layer)` pairs; traces cross the boundary as JSON text.

use std::sync::Arc;

use overhang_core::experiment::{frozen_suite as core_frozen_suite, generate_tasks as core_generate_tasks};
use overhang_core::metrics::{order_dependency, summarize_runs, trace_log_likelihood};
use overhang_core::planners::{generate_candidates, run_episode as core_run_episode, PlannerConfig};
use overhang_core::predictors::{
    generate_dataset, train_classifier, ClassifierModel, DatasetConfig, PerturbationConfig, Predictor,
    PredictorSpec, TrainConfig,
};
use overhang_core::stability::{is_stable_static, Physics};
use overhang_core::trace::{read_jsonl, TraceRecord};
use overhang_core::{Action, BlockSpec, DecisionState, Error, PlacedBlock, TaskSpec, TowerGeometry};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Geometry", module = "overhang", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGeometry {
    inner: TowerGeometry,
}

#[pymethods]
impl PyGeometry {
    /// Blocks as `(width, x, layer)`; the layout is checked.
    #[new]
    fn new(blocks: Vec<(f64, f64, u8)>) -> PyResult<Self> {
        let blocks = blocks
            .into_iter()
            .map(|(w, x, layer)| Ok(PlacedBlock::new(BlockSpec::new(w)?, x, layer)))
            .collect::<Result<Vec<_>, Error>>()
            .map_err(err)?;
        Ok(PyGeometry {
            inner: TowerGeometry::from_blocks(blocks).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: TowerGeometry = serde_json::from_str(text).map_err(json_err)?;
        inner.check_layout().map_err(err)?;
        Ok(PyGeometry { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    fn blocks(&self) -> Vec<(f64, f64, u8)> {
        self.inner
            .blocks()
            .iter()
            .map(|b| (b.spec.width(), b.x, b.layer))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Geometry({:?})", self.blocks())
    }

    fn is_stable(&self) -> bool {
        is_stable_static(&self.inner, &Physics::default()).stable
    }

    /// `(stable, margin)` from the static oracle.
    fn stability(&self) -> (bool, f64) {
        let v = is_stable_static(&self.inner, &Physics::default());
        (v.stable, v.margin)
    }

    fn overhang(&self) -> PyResult<f64> {
        overhang_core::overhang(&self.inner).map_err(err)
    }

    /// `(valid_orders, stable_orders, gamma)`.
    fn order_dependency(&self) -> PyResult<(u64, u64, f64)> {
        let r = order_dependency(&self.inner).map_err(err)?;
        Ok((r.valid_orders, r.stable_orders, r.gamma))
    }

    fn fingerprint(&self) -> u64 {
        self.inner.fingerprint()
    }
}

#[pyclass(name = "Task", module = "overhang", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTask {
    inner: TaskSpec,
}

#[pymethods]
impl PyTask {
    #[new]
    fn new(id: String, widths: Vec<f64>) -> PyResult<Self> {
        let seq = widths
            .into_iter()
            .map(BlockSpec::new)
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        Ok(PyTask {
            inner: TaskSpec::new(id, seq).map_err(err)?,
        })
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    #[getter]
    fn widths(&self) -> Vec<f64> {
        self.inner.sequence.iter().map(|b| b.width()).collect()
    }

    fn __repr__(&self) -> String {
        format!("Task({:?}, {:?})", self.inner.id, self.widths())
    }
}

#[pyclass(name = "State", module = "overhang", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyState {
    inner: DecisionState,
}

#[pymethods]
impl PyState {
    /// Initial state of a task: its first block is already on the ground.
    #[new]
    fn new(task: &PyTask) -> Self {
        PyState {
            inner: DecisionState::initial(&task.inner),
        }
    }

    #[getter]
    fn geometry(&self) -> PyGeometry {
        PyGeometry {
            inner: self.inner.geometry().clone(),
        }
    }

    #[getter]
    fn remaining(&self) -> Vec<f64> {
        self.inner.remaining().iter().map(|b| b.width()).collect()
    }

    #[getter]
    fn is_terminal(&self) -> bool {
        self.inner.is_terminal()
    }

    /// Legality verdict, e.g. `"valid"` or `"penetrates"`.
    fn validate(&self, x: f64, layer: i32) -> PyResult<String> {
        Ok(self
            .inner
            .validate_action(Action::new(x, layer))
            .map_err(err)?
            .to_string())
    }

    fn apply(&self, x: f64, layer: i32) -> PyResult<PyState> {
        Ok(PyState {
            inner: self.inner.apply_action(Action::new(x, layer)).map_err(err)?,
        })
    }

    #[pyo3(signature = (lattice_step = 0.1))]
    fn candidates(&self, lattice_step: f64) -> Vec<(f64, i32)> {
        generate_candidates(&self.inner, lattice_step)
            .into_iter()
            .map(|a| (a.x, a.layer))
            .collect()
    }
}

#[pyclass(name = "Classifier", module = "overhang", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyClassifier {
    inner: Arc<ClassifierModel>,
}

#[pymethods]
impl PyClassifier {
    #[staticmethod]
    #[pyo3(signature = (rows = 50_000, seed = 0, exclude_frozen = true))]
    fn train(py: Python<'_>, rows: usize, seed: u64, exclude_frozen: bool) -> PyResult<Self> {
        let model = py
            .detach(|| {
                let mut cfg = DatasetConfig::new(rows, seed);
                if exclude_frozen {
                    cfg = cfg.excluding(&core_frozen_suite());
                }
                let data = generate_dataset(&cfg)?;
                train_classifier(&data, &TrainConfig { seed, ..TrainConfig::default() })
            })
            .map_err(err)?;
        Ok(PyClassifier { inner: Arc::new(model) })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyClassifier {
            inner: Arc::new(ClassifierModel::load(path.as_ref()).map_err(err)?),
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyClassifier {
            inner: Arc::new(ClassifierModel::from_json(text).map_err(err)?),
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn validation_accuracy(&self) -> f64 {
        self.inner.metrics.validation_accuracy
    }
}

fn predictor_spec(kind: &str, samples: usize, sigma_pos: f64, n_switch: usize, seed: u64) -> PyResult<PredictorSpec> {
    let perturbation = PerturbationConfig {
        samples,
        sigma_pos,
        seed,
        ..PerturbationConfig::default()
    };
    Ok(match kind {
        "veridical" => PredictorSpec::Veridical,
        "ipe" => PredictorSpec::Ipe { perturbation },
        "heuristic" => PredictorSpec::Heuristic,
        "hybrid" => PredictorSpec::Hybrid { perturbation, n_switch },
        other => return Err(PyValueError::new_err(format!("unknown predictor {other:?}"))),
    })
}

#[pyclass(name = "Predictor", module = "overhang", frozen, skip_from_py_object)]
struct PyPredictor {
    inner: Predictor,
}

#[pymethods]
impl PyPredictor {
    /// `kind` is one of veridical, ipe, heuristic or hybrid.
    #[new]
    #[pyo3(signature = (kind = "veridical", model = None, samples = 50, sigma_pos = 0.03, n_switch = 3, seed = 0))]
    fn new(
        kind: &str,
        model: Option<&PyClassifier>,
        samples: usize,
        sigma_pos: f64,
        n_switch: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let spec = predictor_spec(kind, samples, sigma_pos, n_switch, seed)?;
        Ok(PyPredictor {
            inner: spec.resolve(model.map(|m| &m.inner)).map_err(err)?,
        })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn probability(&self, geometry: &PyGeometry) -> PyResult<f64> {
        self.inner.probability(&geometry.inner).map_err(err)
    }

    fn predict(&self, state: &PyState, x: f64, layer: i32) -> PyResult<f64> {
        self.inner.predict(&state.inner, Action::new(x, layer)).map_err(err)
    }

    /// `(step, log_likelihood)` pairs for one JSON trace.
    fn log_likelihood(&self, trace_json: &str) -> PyResult<Vec<(usize, f64)>> {
        let trace: TraceRecord = serde_json::from_str(trace_json).map_err(json_err)?;
        trace.check().map_err(err)?;
        Ok(trace_log_likelihood(&trace, &self.inner)
            .map_err(err)?
            .into_iter()
            .map(|s| (s.step, s.log_likelihood))
            .collect())
    }
}

#[pyfunction]
fn generate_tasks(n: usize, seed: u64) -> PyResult<Vec<PyTask>> {
    Ok(core_generate_tasks(n, seed)
        .map_err(err)?
        .into_iter()
        .map(|inner| PyTask { inner })
        .collect())
}

#[pyfunction]
fn frozen_suite() -> Vec<PyTask> {
    core_frozen_suite().into_iter().map(|inner| PyTask { inner }).collect()
}

type EpisodeOutput = (f64, Vec<(f64, i32)>, String);

/// Plays one task. Returns `(reward, actions, trace_json)`; `depth = 0`
/// plays myopically.
#[pyfunction]
#[pyo3(signature = (task, predictor = "veridical", depth = 0, model = None, seed = 0, beam_width = Some(50)))]
fn run_episode(
    py: Python<'_>,
    task: &PyTask,
    predictor: &str,
    depth: usize,
    model: Option<&PyClassifier>,
    seed: u64,
    beam_width: Option<usize>,
) -> PyResult<EpisodeOutput> {
    let spec = predictor_spec(predictor, 50, 0.03, 3, 0)?;
    let mut config = if depth == 0 {
        PlannerConfig::myopic(spec)
    } else {
        PlannerConfig::lookahead(depth, spec)
    };
    config.beam_width = beam_width;
    let config = config.with_seed(seed);
    let model = model.map(|m| m.inner.clone());
    let task = task.inner.clone();
    let ep = py
        .detach(|| core_run_episode(&task, &config, model.as_ref()))
        .map_err(err)?;
    let actions = ep.trace.steps.iter().map(|s| (s.action.x, s.action.layer)).collect();
    let json = serde_json::to_string(&ep.trace).map_err(json_err)?;
    Ok((ep.reward, actions, json))
}

/// Summary metrics of JSONL trace text, as a JSON object string.
#[pyfunction]
fn summarize(traces_jsonl: &str) -> PyResult<String> {
    let traces = read_jsonl(traces_jsonl.as_bytes()).map_err(err)?;
    serde_json::to_string(&summarize_runs(&traces)).map_err(json_err)
}

#[pymodule]
fn overhang(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGeometry>()?;
    m.add_class::<PyTask>()?;
    m.add_class::<PyState>()?;
    m.add_class::<PyClassifier>()?;
    m.add_class::<PyPredictor>()?;
    m.add_function(wrap_pyfunction!(generate_tasks, m)?)?;
    m.add_function(wrap_pyfunction!(frozen_suite, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add("FORMAT_TAG", overhang_core::FORMAT_TAG)?;
    Ok(())
}
