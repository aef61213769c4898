//! Python bindings: `import kcac`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use kcac_core::curriculum::{
    builtin_task, generate_subtasks, preset_params, select_schedule, PresetTable, ScheduleRules,
    TaskSpec, DEFAULT_SIMILARITY_FLOOR,
};
use kcac_core::env::{ActionCommand, BlockWorldState, EnvConfig, ACTION_DIM, OBSERVATION_LEN};
use kcac_core::experiment::{self, CompareOptions, ExperimentConfig};
use kcac_core::reward::eval_compound;
use kcac_core::sac::{self, ActionMode, Learner, ParamBlob, SacConfig, SacError, Transition};
use kcac_core::similarity;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn env_config(config: Option<&str>) -> PyResult<EnvConfig> {
    let cfg: EnvConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(value_err)?,
        None => EnvConfig::default(),
    };
    cfg.validate().map_err(value_err)?;
    Ok(cfg)
}

fn task(name: &str) -> PyResult<TaskSpec> {
    builtin_task(name, &EnvConfig::default()).map_err(value_err)
}

/// Cosine similarity of two built-in tasks' reward-presence vectors.
#[pyfunction]
fn task_similarity(a: &str, b: &str) -> PyResult<f64> {
    similarity::task_similarity(&task(a)?.reward, &task(b)?.reward).map_err(value_err)
}

/// Eight-entry 0/1 presence vector of a built-in task's reward.
#[pyfunction]
fn reward_vector(name: &str) -> PyResult<Vec<u32>> {
    Ok(task(name)?.reward.to_vector().flags().iter().map(|&f| f as u32).collect())
}

/// Staged plan for `target` as `(task, episodes, preset)` tuples.
#[pyfunction]
#[pyo3(signature = (registry, target, final_budget=1000, similarity_floor=DEFAULT_SIMILARITY_FLOOR))]
fn schedule(
    registry: Vec<String>,
    target: &str,
    final_budget: u64,
    similarity_floor: f64,
) -> PyResult<Vec<(String, u64, String)>> {
    let reg = registry.iter().map(|n| task(n)).collect::<PyResult<Vec<_>>>()?;
    let chain = generate_subtasks(&task(target)?, &reg, similarity_floor).map_err(value_err)?;
    let rules = ScheduleRules { final_budget, ..ScheduleRules::default() };
    let plan = select_schedule(&chain, &rules, &PresetTable::default()).map_err(value_err)?;
    Ok(plan
        .stages()
        .iter()
        .map(|s| (s.task.name.clone(), s.episodes, s.preset.clone().unwrap_or_default()))
        .collect())
}

/// Learner settings of a named preset as a dict.
#[pyfunction]
fn preset<'py>(py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &preset_params(name).map_err(value_err)?)
}

/// Largest relative error between analytic and finite-difference gradients.
#[pyfunction]
#[pyo3(signature = (epsilon=1e-5))]
fn grad_check(epsilon: f64) -> f64 {
    sac::grad_check(epsilon)
}

/// Two-block world paired with one task's reward.
#[pyclass(name = "BlockWorld")]
struct PyBlockWorld {
    world: kcac_core::env::BlockWorld,
    task: TaskSpec,
    state: Option<BlockWorldState>,
}

#[pymethods]
impl PyBlockWorld {
    #[new]
    #[pyo3(signature = (task="stack", config=None))]
    fn new(task: &str, config: Option<&str>) -> PyResult<Self> {
        let cfg = env_config(config)?;
        let spec = builtin_task(task, &cfg).map_err(value_err)?;
        let world = kcac_core::env::BlockWorld::new(cfg).map_err(value_err)?;
        Ok(Self { world, task: spec, state: None })
    }

    #[classattr]
    const OBSERVATION_LEN: usize = OBSERVATION_LEN;
    #[classattr]
    const ACTION_DIM: usize = ACTION_DIM;

    /// Starts an episode and returns the normalized observation.
    fn reset(&mut self, seed: u64) -> PyResult<Vec<f64>> {
        let s = self.world.reset(seed).map_err(value_err)?;
        let obs = self.world.observe(&s).normalized(self.world.config());
        self.state = Some(s);
        Ok(obs)
    }

    /// Applies an action in `[-1, 1]^4`; returns `(obs, reward, done, frac_top)`.
    fn step(&mut self, action: Vec<f64>) -> PyResult<(Vec<f64>, f64, bool, f64)> {
        if action.len() != ACTION_DIM {
            return Err(PyValueError::new_err(format!("action needs {ACTION_DIM} entries")));
        }
        let state = self.state.as_ref().ok_or_else(|| PyRuntimeError::new_err("call reset first"))?;
        let cfg = self.world.config();
        let cmd = ActionCommand::from_normalized(&action, cfg.action_max_delta);
        let (next, ctx) = self.world.step(state, &cmd).map_err(value_err)?;
        let reward = eval_compound(&self.task.reward, &ctx).map_err(runtime_err)?.total;
        let obs = self.world.observe(&next).normalized(cfg);
        let done = self.world.is_terminal(&next);
        let frac_top = self.world.fractional_success(&next).frac_top;
        self.state = Some(next);
        Ok((obs, reward, done, frac_top))
    }

    /// Current world snapshot as a dict.
    fn snapshot<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        match &self.state {
            Some(s) => to_py(py, &s.snapshot),
            None => Err(PyRuntimeError::new_err("call reset first")),
        }
    }
}

/// Soft actor-critic learner.
#[pyclass(name = "SacLearner")]
struct PySacLearner {
    inner: sac::SacLearner,
}

#[pymethods]
impl PySacLearner {
    #[new]
    #[pyo3(signature = (obs_dim, act_dim, preset="lr_1e-4", hidden=vec![64, 64], warmup=1000, seed=0))]
    fn new(obs_dim: usize, act_dim: usize, preset: &str, hidden: Vec<usize>, warmup: usize, seed: u64) -> PyResult<Self> {
        let params = preset_params(preset).map_err(value_err)?;
        let inner = sac::SacLearner::new(obs_dim, act_dim, params, SacConfig { hidden, warmup }, seed)
            .map_err(value_err)?;
        Ok(Self { inner })
    }

    #[pyo3(signature = (obs, deterministic=false))]
    fn act(&mut self, obs: Vec<f64>, deterministic: bool) -> PyResult<Vec<f64>> {
        let mode = if deterministic { ActionMode::Deterministic } else { ActionMode::Stochastic };
        self.inner.select_action(&obs, mode).map_err(value_err)
    }

    fn observe(&mut self, obs: Vec<f64>, action: Vec<f64>, reward: f64, next_obs: Vec<f64>, terminal: bool) -> PyResult<()> {
        let t = Transition { observation: obs, action, reward, next_observation: next_obs, terminal };
        self.inner.observe_transition(t).map_err(value_err)
    }

    /// One gradient update; `None` until enough transitions are stored.
    fn update<'py>(&mut self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyAny>>> {
        match self.inner.update() {
            Ok(report) => Ok(Some(to_py(py, &report)?)),
            Err(SacError::NotReady { .. }) => Ok(None),
            Err(e) => Err(runtime_err(e)),
        }
    }

    fn export_params<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.export_params().to_bytes())
    }

    fn import_params(&mut self, blob: &[u8]) -> PyResult<()> {
        let blob = ParamBlob::from_bytes(blob).map_err(value_err)?;
        self.inner.import_params(&blob).map_err(value_err)
    }

    fn network_hash(&self) -> String {
        self.inner.export_params().network_hash()
    }

    fn reset_temperature(&mut self) {
        self.inner.reset_temperature();
    }

    #[getter]
    fn temperature(&self) -> f64 {
        self.inner.temperature()
    }

    #[getter]
    fn buffer_len(&self) -> usize {
        self.inner.buffer().len()
    }
}

/// Runs an experiment from a JSON config string; returns the output directory.
#[pyfunction]
fn run_experiment(config: &str) -> PyResult<String> {
    let mut cfg = ExperimentConfig::from_json_str(config).map_err(value_err)?;
    cfg.apply_output_override(std::env::var(experiment::OUTPUT_ENV_VAR).ok());
    let out = experiment::run_experiment(&cfg).map_err(runtime_err)?;
    Ok(out.dir.display().to_string())
}

/// Compares two finished experiment directories and returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (baseline, candidate, threshold=0.8, smooth=1, final_window=10))]
fn compare_runs<'py>(
    py: Python<'py>,
    baseline: &str,
    candidate: &str,
    threshold: f64,
    smooth: usize,
    final_window: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let opts = CompareOptions { threshold, smooth, final_window };
    let report = experiment::compare_runs(baseline.as_ref(), candidate.as_ref(), &opts).map_err(runtime_err)?;
    to_py(py, &report)
}

#[pymodule]
fn kcac(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(task_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(reward_vector, m)?)?;
    m.add_function(wrap_pyfunction!(schedule, m)?)?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(compare_runs, m)?)?;
    m.add_class::<PyBlockWorld>()?;
    m.add_class::<PySacLearner>()?;
    Ok(())
}
