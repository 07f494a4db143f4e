"""Smoke test of the preheat Python module.

Build and install first, e.g. `pip install --no-build-isolation ./crates/py`.
"""

import math
import tempfile

import preheat


def main():
    assert abs(preheat.curie_temperature() - 393.0) < 1e-9
    assert preheat.ptc_power(0.0, 253.15) == 0.0
    assert abs(preheat.ptc_power(10.0, 253.15) - 223.5) < 0.1
    assert preheat.compute_reward(0.5, 0.3, 0.0) == 0.1
    assert preheat.compute_reward(0.5, 0.8, 0.1) == -1.6

    v, i_c, i_d = preheat.supervise_action(12.0, 5.0, 0.0, 253.15, 0.5)
    assert v == 10.0 and 0.0 < i_c < 5.0 and i_d >= 1.05 * i_c

    env = preheat.Env(fidelity="reduced", seed=1)
    obs = env.reset_to(253.15, 0.5)
    assert abs(obs[1] - 253.15) < 1e-9 and abs(obs[2] - 253.15) < 1e-9
    first = env.step(10.0, 0.0, 0.0)
    assert first["t_avg"] > 253.15 and first["t_range"] > 0.0 and not first["done"]
    while env.active:
        last = env.step(10.0, 0.0, 0.0)
    assert last["done"] and last["t_avg"] >= 273.15

    report = preheat.simulate("ptc-only")
    assert report["complete"] and report["pulse_energy"] == 0.0
    assert math.isclose(report["total_energy"], report["ptc_energy"])

    with tempfile.TemporaryDirectory() as d:
        returns = preheat.train(d, episodes=2, seed=3)
        assert len(returns) == 2 and all(math.isfinite(r) for r in returns)
        policy = preheat.Policy.load(d + "/checkpoint.json")
        a = policy.act(obs)
        assert 0.0 <= a[0] <= 10.0 and a[1] >= 0.0 and a[2] >= 0.0
        combined = preheat.simulate("combined-policy", checkpoint=d + "/checkpoint.json")
        assert math.isfinite(combined["total_energy"])

    print("smoke test passed")


if __name__ == "__main__":
    main()
