from __future__ import annotations

import json

import numpy as np
import pytest
from helpers import TabulatedFlux

from conslaw.flux import FluxModel
from conslaw.grid import BoundaryTrace, Discretization
from conslaw.nn import (
    FluxNetwork,
    WeightsFormatError,
    batched_interface_fluxes,
    load_weights,
    lxf_flux_bound,
    network_forward,
    nfvm_rollout,
    nfvm_rollout_batch,
    nfvm_step,
    rollout_backward,
    save_weights,
    stencil_windows,
)
from conslaw.schemes import NumericalFluxSpec, fv_step, godunov_flux

G = FluxModel("greenshields")


def _rand_net(seed, a=2, b=1, width=6, layers=3, act="relu", scale=1.0, clip=np.inf):
    rng = np.random.default_rng(seed)
    net = FluxNetwork(a, b, width, layers, act, clip)
    net.set_params([scale * rng.standard_normal(p.shape) for p in net.params()])
    return net


def test_zero_network_outputs_zero():
    net = FluxNetwork()
    assert np.all(net.forward(np.random.default_rng(0).uniform(0, 1, (50, 2))) == 0)


def test_hand_rigged_average_flux():
    # triangular f(u) = min(u, 1 - u) = u - relu(2u - 1) on [0, 1]
    w1 = np.array([[1.0, 0, 2, 0], [0, 1.0, 0, 2]])
    b1 = np.array([0.0, 0, -1, -1])
    w2 = np.array([[0.5], [0.5], [-0.5], [-0.5]])
    net = FluxNetwork(2, 1, 4, 2, "relu", np.inf, 1.0, [w1, w2], [b1, np.zeros(1)])
    tri = FluxModel("triangular_sym")
    rng = np.random.default_rng(1)
    u = rng.uniform(0, 1, (1000, 2))
    want = 0.5 * (tri.flux_value(u[:, 0]) + tri.flux_value(u[:, 1]))
    np.testing.assert_allclose(net.forward(u), want, atol=1e-12)


def test_clip_contract():
    net = _rand_net(2, scale=5.0, clip=0.3)
    out = net.forward(np.random.default_rng(3).uniform(-2, 3, (100_000, 2)))
    assert np.max(np.abs(out)) <= 0.3


def test_attach_model_bound():
    net = FluxNetwork.initialized(model=G)
    assert net.clip_bound == pytest.approx(1.05 * lxf_flux_bound(G))
    assert lxf_flux_bound(G) >= 0.5
    with pytest.raises(ValueError):
        FluxNetwork.initialized(model=G, clip_bound=0.1)


def test_validation():
    with pytest.raises(ValueError):
        FluxNetwork(3, 1)
    with pytest.raises(ValueError):
        FluxNetwork(2, 0)
    with pytest.raises(ValueError):
        FluxNetwork(activation="tanh")


def test_parameter_counts():
    assert 1000 <= FluxNetwork(2, 1, 15, 6).n_params <= 1500
    assert 1500 <= FluxNetwork(4, 5, 18, 6).n_params <= 2200


def test_batched_equals_loop_and_constant_history():
    net = _rand_net(4, a=4, b=2)
    rng = np.random.default_rng(5)
    hist = rng.uniform(0, 1, (2, 9 + 4))
    F = batched_interface_fluxes(net, hist)
    windows = stencil_windows(hist, 4)
    loop = np.array([network_forward(net, w) for w in windows])
    np.testing.assert_allclose(F, loop, atol=1e-15)
    const = batched_interface_fluxes(net, np.full((2, 13), 0.4))
    assert np.all(const == const[0])
    with pytest.raises(ValueError):
        batched_interface_fluxes(net, hist[:1])


def test_pairwise_degeneracy():
    net = _rand_net(6)
    row = np.random.default_rng(7).uniform(0, 1, 8)
    F = batched_interface_fluxes(net, row[None])
    np.testing.assert_allclose(F, net.pairwise(row[:-1], row[1:]), atol=1e-15)


def test_zero_net_step_is_identity():
    u = np.random.default_rng(8).uniform(0, 1, 10)
    disc = Discretization(0.1, 0.01, 10, 1)
    np.testing.assert_array_equal(nfvm_step(u, FluxNetwork(), ([0.2], [0.7]), disc), u)


def test_step_clip_contract():
    rng = np.random.default_rng(9)
    disc = Discretization(0.1, 0.05, 6, 1)
    escaped = 0
    for t in range(10_000 // 100):
        net = _rand_net(100 + t, scale=3.0)
        u = rng.uniform(0, 1, (100, 6))
        gl, gr = rng.uniform(0, 1, (2, 100, 1, 1))
        pre = nfvm_rollout_batch(u, net, gl, gr, disc.cfl_ratio, 1, clip=False)[:, 1]
        post = nfvm_rollout_batch(u, net, gl, gr, disc.cfl_ratio, 1, clip=True)[:, 1]
        escaped += np.any((pre < 0) | (pre > 1))
        assert post.min() >= 0 and post.max() <= 1
    assert escaped > 0


class _GodunovNet(TabulatedFlux):
    def __init__(self, model):
        self.model = model
        self.u_max = model.u_max

    def forward(self, windows):
        w = np.asarray(windows)
        return godunov_flux(self.model, w[..., 0], w[..., 1])


def test_godunov_wrapper_matches_fv_step():
    rng = np.random.default_rng(10)
    disc = Discretization(0.05, 0.005, 20, 1)
    u = rng.uniform(0, 1, 20)
    want = fv_step(u, NumericalFluxSpec("godunov", G), ([0.3], [0.8]), disc)
    got = nfvm_step(u, _GodunovNet(G), ([0.3], [0.8]), disc, clip=False)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_single_step_flux_perturbation_bound_for_networks():
    rng = np.random.default_rng(11)
    grid_vals = np.linspace(0, 1, 21)
    ul, ur = np.meshgrid(grid_vals, grid_vals, indexing="ij")
    disc = Discretization(0.1, 0.05, 15, 1)
    for k in range(40):
        F, Gn = _rand_net(200 + k), _rand_net(300 + k)
        sup = np.max(np.abs(F.pairwise(ul, ur) - Gn.pairwise(ul, ur)))
        u = rng.choice(grid_vals, 15)
        gh = ([rng.choice(grid_vals)], [rng.choice(grid_vals)])
        for clip in (False, True):
            a = nfvm_step(u, F, gh, disc, clip)
            b = nfvm_step(u, Gn, gh, disc, clip)
            assert np.max(np.abs(a - b)) <= 2 * disc.cfl_ratio * sup * (1 + 1e-12)


def test_rollout_zero_steps_and_range_fuzz():
    net = _rand_net(12, scale=2.0)
    disc = Discretization(0.1, 0.05, 8, 0)
    u = np.linspace(0, 1, 8)
    res = nfvm_rollout(u, net, BoundaryTrace.constant(0, 1, 0, 1), disc)
    np.testing.assert_array_equal(res.grid.values, u[None])
    rng = np.random.default_rng(13)
    vals = nfvm_rollout_batch(rng.uniform(0, 1, (10_000, 8)), net, rng.uniform(0, 1, (10_000, 5, 1)),
                              rng.uniform(0, 1, (10_000, 5, 1)), 0.5, 5)
    assert vals.min() >= 0 and vals.max() <= 1


def test_ledger_identity():
    net = _rand_net(14, scale=2.0)
    rng = np.random.default_rng(15)
    disc = Discretization(0.1, 0.05, 12, 20)
    trace = BoundaryTrace(rng.uniform(0, 1, (20, 1)), rng.uniform(0, 1, (20, 1)))
    res = nfvm_rollout(rng.uniform(0, 1, 12), net, trace, disc)
    assert np.any(res.clip_correction != 0)
    np.testing.assert_allclose(res.mass_mismatch, res.clip_correction, atol=1e-15)


def test_determinism_and_translation():
    a = FluxNetwork.initialized(seed=3, model=G)
    b = FluxNetwork.initialized(seed=3, model=G)
    for p, q in zip(a.params(), b.params()):
        np.testing.assert_array_equal(p, q)
    rng = np.random.default_rng(16)
    mid = rng.uniform(0, 1, 10)
    u0 = np.concatenate([np.full(10, 0.2), mid, np.full(10, 0.7)])
    u1 = np.concatenate([np.full(11, 0.2), mid, np.full(9, 0.7)])
    disc = Discretization(0.1, 0.05, 30, 5)
    tr = BoundaryTrace.constant(0.2, 0.7, 5, 1)
    net = _rand_net(17)
    r0 = nfvm_rollout(u0, net, tr, disc).grid.values
    r1 = nfvm_rollout(u1, net, tr, disc).grid.values
    np.testing.assert_allclose(r1[:, 1:], r0[:, :-1], atol=1e-15)
    np.testing.assert_array_equal(nfvm_rollout(u0, net, tr, disc).grid.values, r0)


# ----------------------------------------------------------------------
# gradients


def _fd_check(net, u0, gl, gr, lam, n_T, weights, clip=True, h=1e-5):
    vals, tape = nfvm_rollout_batch(u0, net, gl, gr, lam, n_T, clip, record=True)
    assert tape.horizon == n_T
    grads = rollout_backward(net, tape, weights)
    params = net.params()
    for k, p in enumerate(params):
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            net.set_params(params)
            up = np.sum(weights * nfvm_rollout_batch(u0, net, gl, gr, lam, n_T, clip))
            p[idx] = orig - h
            net.set_params(params)
            dn = np.sum(weights * nfvm_rollout_batch(u0, net, gl, gr, lam, n_T, clip))
            p[idx] = orig
            net.set_params(params)
            fd = (up - dn) / (2 * h)
            assert grads[k][idx] == pytest.approx(fd, rel=1e-4, abs=1e-9)
    return grads


@pytest.mark.parametrize("a,b,act", [(2, 1, "relu"), (2, 1, "elu"), (4, 2, "elu")])
def test_rollout_gradient_matches_finite_differences(a, b, act):
    net = _rand_net(20, a=a, b=b, width=4, layers=3, act=act, scale=0.3)
    rng = np.random.default_rng(21)
    u0 = rng.uniform(0.3, 0.7, (2, 3))
    g = a // 2
    gl = rng.uniform(0.3, 0.7, (2, 2, g))
    gr = rng.uniform(0.3, 0.7, (2, 2, g))
    weights = rng.standard_normal((2, 3, 3))
    vals = nfvm_rollout_batch(u0, net, gl, gr, 0.1, 2)
    assert vals.min() > 0.05 and vals.max() < 0.95  # clips inactive
    _fd_check(net, u0, gl, gr, 0.1, 2, weights)


def test_zero_loss_gradient_gives_zero():
    net = _rand_net(22)
    u0 = np.full((1, 3), 0.5)
    _, tape = nfvm_rollout_batch(u0, net, np.full((1, 2, 1), 0.5), np.full((1, 2, 1), 0.5), 0.1, 2, record=True)
    assert all(np.all(g == 0) for g in rollout_backward(net, tape, np.zeros((1, 3, 3))))
    with pytest.raises(ValueError):
        rollout_backward(net, tape, np.zeros((1, 2, 3)))


def test_gradient_through_active_clip_is_zero():
    # F(ul, ur) = 5 ur drives cell 0 to -2.5, clipped at 0
    net = FluxNetwork(2, 1, 2, 2, "relu", np.inf, 1.0,
                      [np.array([[0.0, 0.0], [5.0, 0.0]]), np.array([[1.0], [0.0]])],
                      [np.zeros(2), np.zeros(1)])
    u0 = np.array([[0.0, 1.0, 0.0]])
    gl = np.zeros((1, 1, 1))
    gr = np.zeros((1, 1, 1))
    vals, tape = nfvm_rollout_batch(u0, net, gl, gr, 0.5, 1, record=True)
    assert tape.pre_clip[0, 0, 0] < 0 and vals[0, 1, 0] == 0
    w = np.zeros((1, 2, 3))
    w[0, 1, 0] = 1.0
    grads = rollout_backward(net, tape, w)
    assert all(np.all(g == 0) for g in grads)
    # perturbing the output layer leaves the clipped value unchanged
    p = net.params()
    p[2] = p[2] * 1.001
    net.set_params(p)
    assert nfvm_rollout_batch(u0, net, gl, gr, 0.5, 1)[0, 1, 0] == vals[0, 1, 0]


def test_weights_roundtrip(tmp_path):
    net = FluxNetwork.initialized(4, 5, 18, 6, "elu", model=G, seed=9)
    save_weights(net, tmp_path / "w.json")
    back = load_weights(tmp_path / "w.json")
    for p, q in zip(net.params(), back.params()):
        np.testing.assert_array_equal(p, q)
    assert back.clip_bound == net.clip_bound and back.activation == "elu"
    doc = json.loads((tmp_path / "w.json").read_text())
    assert doc["version"] == 1 and doc["stencil"] == [4, 5]
    doc["version"] = 2
    with pytest.raises(WeightsFormatError, match="version"):
        FluxNetwork.from_dict(doc)
    doc["version"] = 1
    doc["layers"][1]["w"] = "oops"
    with pytest.raises(WeightsFormatError, match=r"layers\[1\]"):
        FluxNetwork.from_dict(doc)
