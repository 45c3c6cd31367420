import math

import numpy as np
import pytest

import physprior


def test_presets():
    assert "pendulum" in physprior.preset_names()
    cfg = physprior.preset("pendulum")
    assert cfg["n_train"] == "15"
    assert float(cfg["t_predict"]) == pytest.approx(20 * math.pi)
    assert physprior.preset("spring", {"epochs": 3})["epochs"] == "3"
    with pytest.raises(ValueError):
        physprior.preset("no-such-preset")
    with pytest.raises(ValueError):
        physprior.preset("spring", {"not_a_key": 1})


def test_eps_u():
    rng = np.random.default_rng(0)
    ref = rng.normal(size=(10, 2))
    pred = rng.normal(size=(10, 2))
    assert physprior.metric_eps_u(ref, ref) == 0.0
    assert physprior.metric_eps_u(np.zeros_like(ref), ref) == pytest.approx(1.0)
    assert physprior.metric_eps_u(2 * pred, 2 * ref) == pytest.approx(physprior.metric_eps_u(pred, ref))
    with pytest.raises(ValueError):
        physprior.metric_eps_u(np.zeros((3, 2)), ref)


def test_sod_oracles():
    exact = physprior.sod_exact(0.005, 0.1)
    roe = physprior.roe_sod(0.005, 0.001, 0.1)
    assert exact.shape == (200, 3)
    l1 = np.sum(np.abs(roe[:, 0] - exact[:, 0])) * 0.005
    assert l1 == pytest.approx(0.00882923, rel=1e-5)
    # mass of the closed tube is unchanged
    assert np.sum(roe[:, 0]) == pytest.approx(np.sum(physprior.sod_exact(0.005, 0.0)[:, 0]), rel=1e-12)


def test_invariant_suites():
    for rows in (physprior.symplectic_checks(5), physprior.integrator_order_checks(),
                 physprior.conservation_checks(), physprior.detection_checks(20)):
        assert rows
        assert all(r["passed"] for r in rows), rows


def test_small_reproduction_and_checkpoint(tmp_path):
    overrides = {"epochs": 2, "n_train": 16, "n_val": 4, "batch": 8, "energy_hidden": 8,
                 "energy_layers": 2, "t_predict": 2, "seed": 5}
    a = physprior.reproduce("spring", overrides)
    b = physprior.reproduce("spring", overrides)
    assert a["files"] == b["files"]
    assert a["files"]["metrics.csv"].startswith(b"epoch,loss_train,loss_val,lr\n")
    assert {r["check"] for r in a["checks"]} >= {"max_radius_error"}

    path = tmp_path / "checkpoint.bin"
    path.write_bytes(a["files"]["checkpoint.bin"])
    ck = physprior.load_checkpoint(str(path))
    assert ck["family"] == "nssnn"
    assert ck["hyperparameters"]["energy_hidden"] == "8"
    assert all(np.all(np.isfinite(v)) for v in ck["parameters"].values())
    with pytest.raises(OSError):
        physprior.load_checkpoint(str(tmp_path / "missing.bin"))
