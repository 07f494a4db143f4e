//! Embeds an interpreter, registers the module and drives it from Python.

use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<R>(f: impl FnOnce(Python<'_>, &Bound<'_, PyDict>) -> R) -> R {
    static INIT: std::sync::Once = std::sync::Once::new();
    INIT.call_once(|| {
        pyo3::append_to_inittab!(preheat);
        Python::initialize();
    });
    Python::attach(|py| {
        let globals = PyDict::new(py);
        py.run(c"import preheat", Some(&globals), None).unwrap();
        f(py, &globals)
    })
}

use preheat::preheat;

#[test]
fn functions_match_documented_values() {
    with_module(|py, g| {
        py.run(
            c"assert abs(preheat.curie_temperature() - 393.0) < 1e-9\nassert preheat.compute_reward(0.5, 0.8, 0.1) == -1.6\nassert preheat.compute_reward(0.5, 0.6, 0.0, True) == 0.1 - 200.0",
            Some(g),
            None,
        )
        .unwrap();
    });
}

#[test]
fn env_episode_runs_to_target_and_rejects_bad_commands() {
    with_module(|py, g| {
        py.run(
            c"
env = preheat.Env(fidelity='reduced', seed=4)
env.reset_to(268.15, 0.5)
n = 0
while env.active:
    tr = env.step(10.0, 0.0, 0.0)
    n += 1
assert tr['done'] and tr['t_avg'] >= 273.15 and n < 50
try:
    preheat.ptc_power(11.0, 253.15)
    raise AssertionError('accepted out-of-range voltage')
except ValueError:
    pass
",
            Some(g),
            None,
        )
        .unwrap();
    });
}
