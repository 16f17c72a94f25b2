from __future__ import annotations

import math

import numpy as np
import pytest

from conslaw.calibration import (
    CalibrationData,
    DEConfig,
    FDSamples,
    ParamBounds,
    Units,
    build_fundamental_diagram,
    calibrate,
    differential_evolution,
    fd_mse_objective,
    prediction_mse_objective,
)
from conslaw.flux import FluxModel
from conslaw.grid import BoundaryTrace, Discretization, SolutionGrid
from conslaw.schemes import NumericalFluxSpec, fv_rollout

TRUE = {"v_max": 61.27, "rho_max": 106.18}


def synthetic_grid(params=TRUE, seed=0, noise=0.0):
    """Godunov rollout in km / h units from a smooth-plus-jump profile."""
    model = FluxModel("greenshields", params)
    disc = Discretization(0.05, 4e-4, 40, 60)
    x = disc.centers
    u0 = 40 + 30 * np.sin(2 * np.pi * x / 2.0) + 25 * (x > 1.0)
    tr = BoundaryTrace.constant(u0[0], u0[-1], disc.n_steps, 1)
    vals = fv_rollout(u0, NumericalFluxSpec("godunov", model), tr, disc).grid.values
    rng = np.random.default_rng(seed)
    vals = vals * (1 + noise * rng.standard_normal(vals.shape))
    return SolutionGrid(disc, vals), tr


def synthetic_fd(seed, n=500, noise=0.05, params=TRUE):
    rng = np.random.default_rng(seed)
    k = rng.uniform(0, params["rho_max"], n)
    q = params["v_max"] * k * (1 - k / params["rho_max"]) * (1 + noise * rng.standard_normal(n))
    return FDSamples(k, np.maximum(q, 0.0))


def test_bounds_validation():
    b = ParamBounds.from_dict({"v_max": [1, 2], "w": [-3, -1]})
    assert b.to_dict() == {"v_max": [1.0, 2.0], "w": [-3.0, -1.0]}
    with pytest.raises(ValueError):
        ParamBounds.from_dict({"v_max": [2, 1]})
    with pytest.raises(ValueError):
        ParamBounds.from_dict({"w": [-1, 1]})
    with pytest.raises(ValueError):
        ParamBounds.from_dict({"rho_max": [-1, 1]})
    with pytest.raises(ValueError):
        ParamBounds.default("burgers", "fd")
    assert ParamBounds.default("greenshields", "prediction").names == ("v_max", "rho_max")


def test_units_conversion():
    u = Units(density=2.0, speed=3.0)
    assert u.to_solver({"rho_max": 1.0, "v_max": 1.0, "c2": 1.0, "z": 5.0}) == {
        "rho_max": 2.0, "v_max": 3.0, "c2": 0.5, "z": 5.0}


def test_de_sphere_and_rastrigin():
    r = differential_evolution(lambda x: float(np.sum(x**2)), ParamBounds(("x", "y"), (-5, -5), (5, 5)),
                               DEConfig(max_gens=200))
    assert r.fun < 1e-10 and np.abs(r.x).max() < 1e-5
    assert r.history == sorted(r.history, reverse=True)
    rast = lambda x: float(20 + np.sum(x**2 - 10 * np.cos(2 * np.pi * x)))
    b = ParamBounds(("x", "y"), (-5.12, -5.12), (5.12, 5.12))
    hits = sum(differential_evolution(rast, b, DEConfig(max_gens=300, seed=s)).fun < 1e-3 for s in range(5))
    assert hits >= 4


def test_de_constant_and_determinism():
    b = ParamBounds(("x",), (0,), (1,))
    r = differential_evolution(lambda x: 1.0, b, DEConfig(max_gens=7))
    assert r.generations == 7 and r.fun == 1.0
    f = lambda x: float((x[0] - 0.3) ** 2)
    a, c = differential_evolution(f, b, DEConfig(seed=3, max_gens=20)), differential_evolution(f, b, DEConfig(seed=3, max_gens=20))
    assert a.x[0] == c.x[0] and a.evaluations == c.evaluations
    inf_everywhere = differential_evolution(lambda x: math.inf, b, DEConfig(max_gens=3))
    assert math.isinf(inf_everywhere.fun)


def test_fd_objective():
    fd = synthetic_fd(0, noise=0.0)
    assert fd_mse_objective([61.27, 106.18], "greenshields", fd, ("v_max", "rho_max")) < 1e-20
    assert fd_mse_objective(TRUE, "greenshields", fd) < 1e-20
    assert fd_mse_objective([61.27, -1.0], "greenshields", fd, ("v_max", "rho_max")) == math.inf
    # clamped flow curve: densities past rho_max contribute q^2
    small = FDSamples([0.5, 2.0], [1.0, 3.0])
    assert fd_mse_objective({"v_max": 4.0, "rho_max": 1.0}, "greenshields", small) == pytest.approx(0.5 * (0 + 9.0))


def test_fd_samples_validation_and_csv(tmp_path):
    with pytest.raises(ValueError):
        FDSamples([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        FDSamples([], [])
    with pytest.raises(ValueError):
        FDSamples([-1.0], [1.0])
    fd = FDSamples([1.0, 2.5], [10.0, 20.0], "veh/mi", "veh/min")
    fd.to_csv(tmp_path / "fd.csv")
    back = FDSamples.from_csv(tmp_path / "fd.csv")
    np.testing.assert_array_equal(back.density, fd.density)
    assert back.density_unit == "veh/mi" and back.flow_unit == "veh/min"
    (tmp_path / "plain.csv").write_text("density,flow\n1,2\n3,4\n")
    assert FDSamples.from_csv(tmp_path / "plain.csv").flow.tolist() == [2.0, 4.0]


def test_fundamental_diagram_from_uniform_traffic():
    # vehicles every 0.1 km at 50 km/h: density 10 veh/km, flow 500 veh/h
    t = np.linspace(0, 1, 201)
    trajs = [(t, -40.0 + 0.1 * i + 50 * t) for i in range(1000)]
    fd = build_fundamental_diagram(trajs, window_length=1.0, count_interval=0.1, centers=[10.0], t_range=(0.2, 0.8))
    assert len(fd) == 6
    np.testing.assert_allclose(fd.density, 10.0, rtol=0.02)
    np.testing.assert_allclose(fd.flow, 500.0, rtol=0.02)
    pre = build_fundamental_diagram(np.array([[1.0, 2.0]]), 1.0, 1.0)
    assert pre.flow.tolist() == [2.0]
    with pytest.raises(ValueError):
        build_fundamental_diagram([], 1.0, 1.0)
    with pytest.raises(ValueError):
        build_fundamental_diagram(trajs, 1.0, 5.0, t_range=(0.0, 1.0))


def test_prediction_objective():
    grid, tr = synthetic_grid()
    names = ("v_max", "rho_max")
    assert prediction_mse_objective([61.27, 106.18], "greenshields", grid, trace=tr, names=names) == 0.0
    assert prediction_mse_objective([70.0, 106.18], "greenshields", grid, trace=tr, names=names) > 0
    # density above the cap, and a CFL violation
    assert prediction_mse_objective([61.27, 60.0], "greenshields", grid, trace=tr, names=names) == math.inf
    assert prediction_mse_objective([400.0, 106.18], "greenshields", grid, trace=tr, names=names) == math.inf
    assert np.isfinite(prediction_mse_objective([61.27, 106.18], "greenshields", grid, names=names))


def test_fd_recovery_single_seed():
    model, rep = calibrate("greenshields", "fd", CalibrationData(fd=synthetic_fd(0)), de_config=DEConfig(max_gens=300))
    assert rep.params["v_max"] == pytest.approx(61.27, rel=0.02)
    assert rep.params["rho_max"] == pytest.approx(106.18, rel=0.02)
    assert rep.prediction_mse is None and model.family == "greenshields"
    d = rep.to_dict()
    assert d["units"]["fd_mse"] == "(veh/h/lane)^2"


def test_prediction_recovery_noise_free():
    grid, tr = synthetic_grid()
    _, rep = calibrate("greenshields", "prediction", CalibrationData(grid=grid, trace=tr),
                       de_config=DEConfig(max_gens=80, pop_factor=10))
    assert rep.params["v_max"] == pytest.approx(61.27, rel=1e-2)
    assert rep.params["rho_max"] == pytest.approx(106.18, rel=1e-2)
    assert rep.scheme == "godunov"


def test_calibrate_validation(tmp_path):
    with pytest.raises(ValueError):
        calibrate("greenshields", "both", CalibrationData())
    with pytest.raises(ValueError):
        calibrate("greenshields", "fd", CalibrationData())
    with pytest.raises(ValueError):
        calibrate("greenshields", "prediction", CalibrationData())
    _, rep = calibrate("greenshields", "fd", CalibrationData(fd=synthetic_fd(1)), de_config=DEConfig(max_gens=5))
    rep.fd_mse = math.inf
    assert rep.to_dict()["fd_mse"] is None
    rep.to_json(tmp_path / "r.json")
