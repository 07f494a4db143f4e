//! Python module `preheat`: the preheating environment, the supervisor, the
//! film model, trained policies and the scenario runners.

use std::path::PathBuf;

use preheat_core::electrochem::{CellModel, Fidelity};
use preheat_core::env::{reward_terms, PreheatEnv, RewardConfig, Transition};
use preheat_core::experiments::{load_policy, run_scenario, train_policy, EnergyReport, RunConfig};
use preheat_core::ptc::PtcParameters;
use preheat_core::rl::GaussianPolicy;
use preheat_core::supervisor::{supervise, ActionProposal};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: preheat_core::Error) -> PyErr {
    match e {
        preheat_core::Error::Config(_)
        | preheat_core::Error::CommandRange(_)
        | preheat_core::Error::InvalidParameters(_)
        | preheat_core::Error::Domain(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Config from an optional TOML file with an optional fidelity override.
fn run_config(config: Option<PathBuf>, fidelity: Option<&str>, seed: Option<u64>) -> PyResult<RunConfig> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p).map_err(err)?,
        None => RunConfig::default(),
    };
    if let Some(f) = fidelity {
        cfg.env.fidelity = f.parse::<Fidelity>().map_err(err)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn report_dict<'py>(py: Python<'py>, r: &EnergyReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("ptc_energy", r.ptc_energy)?;
    d.set_item("pulse_energy", r.pulse_energy)?;
    d.set_item("total_energy", r.total_energy)?;
    d.set_item("lib_energy", r.lib_energy)?;
    d.set_item("time_to_target", r.time_to_target)?;
    d.set_item("final_t_range", r.final_t_range)?;
    d.set_item("complete", r.complete)?;
    Ok(d)
}

fn transition_dict<'py>(py: Python<'py>, t: &Transition) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let o = &t.next_obs;
    d.set_item("observation", (o.soc, o.t_m, o.t_out, o.v_t, o.t_des))?;
    d.set_item("action", (t.action.v_ptc, t.action.i_c, t.action.i_d))?;
    d.set_item("reward", t.reward)?;
    d.set_item("done", t.done)?;
    d.set_item("time", t.diagnostics.time)?;
    d.set_item("t_avg", t.diagnostics.t_avg)?;
    d.set_item("t_range", t.diagnostics.t_range)?;
    d.set_item("ptc_energy", t.diagnostics.ptc_energy)?;
    d.set_item("pulse_heat_energy", t.diagnostics.pulse_heat_energy)?;
    d.set_item("failed", t.diagnostics.failed)?;
    Ok(d)
}

/// Preheating environment. Observations are (soc, t_m, t_out, v_t, t_des).
#[pyclass(name = "Env")]
struct PyEnv {
    inner: PreheatEnv,
}

#[pymethods]
impl PyEnv {
    #[new]
    #[pyo3(signature = (fidelity = "reduced", config = None, seed = 0))]
    fn new(fidelity: &str, config: Option<PathBuf>, seed: u64) -> PyResult<Self> {
        let cfg = run_config(config, Some(fidelity), None)?;
        let mut env_cfg = cfg.env.clone();
        env_cfg.episode.seed = seed;
        let params = cfg.load_params().map_err(err)?;
        Ok(Self {
            inner: PreheatEnv::new(params, env_cfg).map_err(err)?,
        })
    }

    /// Starts an episode from a random initial state.
    fn reset(&mut self) -> PyResult<(f64, f64, f64, f64, f64)> {
        let o = self.inner.reset().map_err(err)?;
        Ok((o.soc, o.t_m, o.t_out, o.v_t, o.t_des))
    }

    /// Starts an episode at a uniform temperature (K) and state of charge.
    fn reset_to(&mut self, temperature: f64, soc: f64) -> PyResult<(f64, f64, f64, f64, f64)> {
        let o = self.inner.reset_to(temperature, soc).map_err(err)?;
        Ok((o.soc, o.t_m, o.t_out, o.v_t, o.t_des))
    }

    /// Applies one supervised 5 s hold of film voltage (V) and pulse
    /// amplitudes (A).
    fn step<'py>(&mut self, py: Python<'py>, v_ptc: f64, i_c: f64, i_d: f64) -> PyResult<Bound<'py, PyDict>> {
        let t = self.inner.step(&ActionProposal { v_ptc, i_c, i_d }).map_err(err)?;
        transition_dict(py, &t)
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.time()
    }

    #[getter]
    fn active(&self) -> bool {
        self.inner.is_active()
    }
}

/// Trained Gaussian policy read from a checkpoint.
#[pyclass(name = "Policy")]
struct PyPolicy {
    inner: GaussianPolicy,
}

#[pymethods]
impl PyPolicy {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_policy(&path).map_err(err)?,
        })
    }

    /// Deterministic proposal (v_ptc, i_c, i_d) for a raw observation.
    fn act(&self, observation: (f64, f64, f64, f64, f64)) -> PyResult<(f64, f64, f64)> {
        let (soc, t_m, t_out, v_t, t_des) = observation;
        let obs = preheat_core::env::Observation { soc, t_m, t_out, v_t, t_des };
        let a = self.inner.mean_action(&obs.normalized()).map_err(err)?;
        Ok((a.v_ptc, a.i_c, a.i_d))
    }
}

/// Film power (W) at voltage `v` and film temperature `t_film` (K).
#[pyfunction]
fn ptc_power(v: f64, t_film: f64) -> PyResult<f64> {
    PtcParameters::default().power(v, t_film).map_err(err)
}

#[pyfunction]
fn curie_temperature() -> PyResult<f64> {
    PtcParameters::default().curie_temperature().map_err(err)
}

/// Reward of one hold from the mean-temperature rise, the current range
/// and its change, all in K, with the default weights.
#[pyfunction]
#[pyo3(signature = (delta_t_avg, t_range, delta_t_range, done = false))]
fn compute_reward(delta_t_avg: f64, t_range: f64, delta_t_range: f64, done: bool) -> f64 {
    reward_terms(delta_t_avg, t_range, delta_t_range, done, &RewardConfig::default()).total
}

/// Supervised action for a fresh cell at uniform temperature and SOC.
#[pyfunction]
#[pyo3(signature = (v_ptc, i_c, i_d, temperature, soc, fidelity = "reduced"))]
fn supervise_action(v_ptc: f64, i_c: f64, i_d: f64, temperature: f64, soc: f64, fidelity: &str) -> PyResult<(f64, f64, f64)> {
    let cfg = run_config(None, Some(fidelity), None)?;
    let e = &cfg.env;
    let model = CellModel::new(e.fidelity, cfg.load_params().map_err(err)?, e.mesh, soc, temperature).map_err(err)?;
    let a = supervise(
        &ActionProposal { v_ptc, i_c, i_d },
        &model,
        temperature,
        e.ptc.v_max,
        &e.pulse,
        &e.supervisor,
    );
    Ok((a.v_ptc, a.i_c, a.i_d))
}

/// Runs ptc-only, pulse-only or combined-policy from the configured initial
/// state; writes the trace when `out` is given. Returns the energy report.
#[pyfunction]
#[pyo3(signature = (scenario, fidelity = "reduced", config = None, seed = 0, checkpoint = None, out = None))]
fn simulate<'py>(
    py: Python<'py>,
    scenario: &str,
    fidelity: &str,
    config: Option<PathBuf>,
    seed: u64,
    checkpoint: Option<PathBuf>,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = run_config(config, Some(fidelity), Some(seed))?;
    cfg.scenario = scenario.parse().map_err(err)?;
    if checkpoint.is_some() {
        cfg.checkpoint = checkpoint;
    }
    cfg.validate().map_err(err)?;
    let policy = cfg.checkpoint.as_ref().map(|p| load_policy(p)).transpose().map_err(err)?;
    let params = cfg.load_params().map_err(err)?;
    let s = py
        .detach(|| run_scenario(cfg.scenario, &cfg, params, policy.as_ref()))
        .map_err(err)?;
    if let Some(dir) = out {
        preheat_core::experiments::write_scenario(&dir, cfg.scenario.name(), &s).map_err(err)?;
    }
    report_dict(py, &s.report)
}

/// Trains one seed and writes metrics and the final checkpoint to `out`.
/// Returns the per-episode returns.
#[pyfunction]
#[pyo3(signature = (out, episodes = 500, fidelity = "reduced", config = None, seed = 0))]
fn train(py: Python<'_>, out: PathBuf, episodes: usize, fidelity: &str, config: Option<PathBuf>, seed: u64) -> PyResult<Vec<f64>> {
    let mut cfg = run_config(config, Some(fidelity), Some(seed))?;
    cfg.train.episodes = episodes;
    cfg.validate().map_err(err)?;
    let params = cfg.load_params().map_err(err)?;
    let (_, metrics) = py
        .detach(|| train_policy(&cfg, params, seed, Some(&out)))
        .map_err(err)?;
    Ok(metrics.iter().map(|m| m.episode_return).collect())
}

#[pymodule]
pub fn preheat(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEnv>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(ptc_power, m)?)?;
    m.add_function(wrap_pyfunction!(curie_temperature, m)?)?;
    m.add_function(wrap_pyfunction!(compute_reward, m)?)?;
    m.add_function(wrap_pyfunction!(supervise_action, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
