import json

import numpy as np
import pytest

import nphdae


def test_fhn_rollout_keeps_constraint():
    spec = nphdae.fhn()
    sys = nphdae.System(spec)
    assert sys.size == sys.differential + sys.algebraic
    assert sys.E.shape == (sys.size, sys.size)
    J = sys.J
    assert np.allclose(J, -J.T)
    traj = sys.rollout([0.3, -0.2], steps=200, dt=spec.dt)
    assert traj["states"].shape == (201, sys.size)
    assert traj["t"][-1] == pytest.approx(200 * spec.dt)
    u = sys.inputs()
    worst = max(np.linalg.norm(sys.h(x, u)) for x in traj["states"])
    assert worst < 1e-8


def test_consistent_init_and_bad_sizes():
    sys = nphdae.System(nphdae.dgu())
    x0 = sys.consistent_init([0.1, 0.2])
    assert np.linalg.norm(sys.h(x0, sys.inputs())) < 1e-9
    with pytest.raises(nphdae.ConfigError):
        sys.consistent_init([0.1])


def test_dataset_roundtrip(tmp_path):
    spec = nphdae.dgu()
    ds = nphdae.generate_dataset(spec, trajectories=3, steps=20, seed=4)
    assert len(ds) == 3
    assert ds.dt == pytest.approx(spec.dt)
    ds.save(str(tmp_path / "d"))
    back = nphdae.load_dataset(str(tmp_path / "d"))
    np.testing.assert_array_equal(back[1]["states"], ds[1]["states"])
    again = nphdae.generate_dataset(spec, trajectories=3, steps=20, seed=4)
    np.testing.assert_array_equal(again[2]["states"], ds[2]["states"])


def test_train_and_evaluate_tiny():
    spec = nphdae.fhn()
    data = nphdae.generate_dataset(spec, trajectories=3, steps=40, seed=1)
    train, val = data.split(2)
    cfg = {"epochs": 20, "batches_per_epoch": 1, "batch_size": 16, "hidden": [8], "activation": "tanh",
           "log_every": 10}
    model, history = nphdae.train(spec, train, val, cfg)
    assert json.loads(model)["system"]["name"] == "fhn"
    assert [row["epoch"] for row in history][-1] <= 20
    model2, _ = nphdae.train(spec, train, val, cfg)
    assert model == model2
    base, _ = nphdae.train(spec, train, val, cfg, baseline=True)
    assert json.loads(base)["kind"] == "node"
    summary = nphdae.evaluate(spec, base, val, 20)
    assert "median_mse" in summary


def test_compose_grid():
    units = [nphdae.dgu() for _ in range(3)]
    lines = [nphdae.tl_random(k) for k in range(3)]
    couplings = nphdae.complete_graph_couplings(3)
    assert len(couplings) == 6
    sys, a = nphdae.compose(units + lines, couplings)
    assert a.shape[1] == 6
    assert np.allclose(sys.J, -sys.J.T)
    traj = sys.rollout(np.zeros(sys.differential), steps=50, dt=0.01)
    assert np.all(np.isfinite(traj["states"]))


def test_bad_config_is_value_error():
    spec = nphdae.fhn()
    data = nphdae.generate_dataset(spec, trajectories=2, steps=10)
    with pytest.raises(ValueError):
        nphdae.train(spec, data, data, {"colour": 1})
