import json
import math
from pathlib import Path

import numpy as np
import pytest

import instanton

CONFIGS = Path(__file__).resolve().parents[2] / "configs"

TINY = {
    "name": "tiny",
    "runtime_class": "seconds",
    "problem": {
        "drift": "maier_stein", "drift_params": {"beta": 1}, "noise": "gaussian",
        "x1": [-1, 0], "x2": [1, 0], "T": 2, "N_T": 20, "tau": 1, "tau1": 10, "tau2": 10,
    },
    "solver": {"phi_layers": [1, 6, 2], "g_layers": [1, 6, 2], "iterations": 100},
    "oracle": {"N": 10, "iterations": 2000},
}


def test_bundled_configs_load():
    files = sorted(CONFIGS.glob("*.cfg"))
    assert len(files) >= 5
    for f in files:
        c = instanton.load_config(f)
        assert c.runtime_class in {"seconds", "minutes", "hours"}
        assert len(c.content_hash) == 40


def test_missing_field_is_named():
    doc = json.loads(json.dumps(TINY))
    del doc["problem"]["tau2"]
    with pytest.raises(instanton.ConfigError, match="tau2"):
        instanton.parse_config(json.dumps(doc))


def test_quadrature_gamma_two():
    grid = instanton.QuadratureGrid(2.0, 2, 5.0, 0.05)
    assert abs(grid.total_mass() - math.pi) < 1e-3
    assert abs(grid.msd_constant() - math.pi) < 1e-3
    assert abs(grid.cumulant(np.array([1.0, 0.0])) - math.pi * (math.exp(0.25) - 1)) < 1e-3
    theta = np.array([0.3, -0.2])
    back, cost = grid.legendre(grid.cumulant_gradient(theta))
    assert np.allclose(back, theta, atol=1e-8)
    assert cost > 0


def test_train_and_oracle_shapes():
    c = instanton.parse_config(json.dumps(TINY))
    r = instanton.train(c)
    assert r["states"].shape == (2, 20)
    assert r["times"][-1] == pytest.approx(2.0)
    assert r["history"]["iteration"] == [0, 100]
    again = instanton.train(c)
    assert np.array_equal(r["states"], again["states"])
    o = instanton.oracle(c)
    assert o["states"].shape == (2, 10)
    assert o["action"] > 0


def test_reversed_path_hausdorff_zero(tmp_path):
    t = np.linspace(0, 1, 5)
    s = np.vstack([np.linspace(-1, 1, 5), [0, 0.2, 0.3, 0.2, 0]])
    assert instanton.hausdorff_distance(s, s[:, ::-1]) == 0.0
    instanton.write_path_csv(tmp_path / "p.csv", t, s)
    back = instanton.read_path_csv(tmp_path / "p.csv")
    assert np.array_equal(back["states"], s)


def test_drift_and_action():
    b = instanton.drift("maier_stein", {"beta": 10}, np.array([[-1.0, 0.0], [0.0, 0.0]]))
    assert np.allclose(b, 0.0)
    t = np.linspace(0, 1, 3)
    rest = np.array([[-1.0, -1.0, -1.0], [0.0, 0.0, 0.0]])
    assert instanton.gaussian_action(t, rest, 10.0) == 0.0


def test_msd_gamma_two():
    e = instanton.estimate_msd(2.0, 2, 0.1, 1.0, 20000, 3)
    assert e["expected"] == pytest.approx(0.1 * math.pi)
    assert abs(e["z_score"]) < 4


def test_run_exit_codes(tmp_path):
    good = tmp_path / "c.cfg"
    good.write_text(json.dumps(TINY))
    rc, log = instanton.run("validate-config", good)
    assert rc == 0 and "tiny" in log
    bad = json.loads(json.dumps(TINY))
    bad["simulate"] = {"epsilon": 0.1, "dt": 0.01, "T": 1, "trials": 0}
    (tmp_path / "bad.cfg").write_text(json.dumps(bad))
    rc, log = instanton.run("simulate", tmp_path / "bad.cfg", out=tmp_path / "run")
    assert rc == 2 and "trials" in log
