from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conslaw.flux import (
    DEFAULT_PARAMS,
    FAMILIES,
    FluxDomainError,
    FluxModel,
    UnsupportedFamilyError,
    load_model,
)

CONCAVE = [f for f in FAMILIES if f != "burgers"]


def test_value_examples():
    assert FluxModel("greenshields").flux_value(0.5) == pytest.approx(0.25)
    assert FluxModel("burgers").flux_value(1.0) == pytest.approx(0.5)
    for fam in FAMILIES:
        assert FluxModel(fam).flux_value(0.0) == 0.0


@pytest.mark.parametrize("fam", [f for f in CONCAVE if f != "underwood"])
def test_zero_at_rho_max(fam):
    m = FluxModel(fam)
    assert m.flux_value(m.params["rho_max"]) == pytest.approx(0.0, abs=1e-15)


def test_domain_errors():
    m = FluxModel("greenshields")
    with pytest.raises(FluxDomainError, match="rho_max"):
        m.flux_value(1.5)
    with pytest.raises(FluxDomainError):
        m.flux_value(-0.1)


def test_derivative_examples():
    assert FluxModel("greenshields").flux_derivative(0.0) == pytest.approx(1.0)
    assert FluxModel("burgers").flux_derivative(0.7) == pytest.approx(0.7)
    tri = FluxModel("triangular_sym")
    assert tri.flux_derivative(0.5 - 1e-9) == pytest.approx(1.0)
    assert tri.flux_derivative(0.5 + 1e-9) == pytest.approx(-1.0)
    assert tri.flux_derivative(0.5, side="left") == 1.0
    assert tri.flux_derivative(0.5, side="right") == -1.0


def test_critical_density_examples():
    assert FluxModel("greenshields").critical_density() == pytest.approx(0.5)
    assert FluxModel("triangular_sym").critical_density() == pytest.approx(0.5)
    assert FluxModel("triangular_skw").critical_density() == pytest.approx(1 / 3)
    assert FluxModel("trapezoidal").critical_density() == (0.2, 0.8)
    with pytest.raises(UnsupportedFamilyError):
        FluxModel("burgers").critical_density()


def test_max_wave_speed_examples():
    assert FluxModel("greenshields").max_wave_speed(0, 1) == pytest.approx(1.0)
    assert FluxModel("burgers").max_wave_speed(0, 1) == pytest.approx(1.0)
    assert FluxModel("triangular_skw").max_wave_speed(0, 1) == pytest.approx(2.0)


def test_legendre_examples():
    g = FluxModel("greenshields")
    assert g.legendre_transform(0.0) == pytest.approx(0.25)
    assert g.legendre_derivative(0.0) == pytest.approx(-0.5)
    assert g.legendre_derivative(1.0) == pytest.approx(0.0)
    assert g.legendre_derivative(-1.0) == pytest.approx(-1.0)
    assert FluxModel("triangular_sym").legendre_transform(1.0) == pytest.approx(0.0)
    for fam in ("greenshields", "triangular_sym", "triangular_skw", "trapezoidal"):
        m = FluxModel(fam)
        w = m.speed_range[0]
        assert m.legendre_transform(w) == pytest.approx(-w * m.params["rho_max"], abs=1e-12)
    with pytest.raises(FluxDomainError):
        g.legendre_transform(2.0)


def _random_model(rng, fam):
    p = dict(DEFAULT_PARAMS[fam])
    if fam == "greenshields":
        p = {"v_max": rng.uniform(0.5, 2), "rho_max": rng.uniform(0.5, 2)}
    elif fam in ("triangular_sym", "triangular_skw"):
        p = {"v_max": rng.uniform(0.5, 2), "w": -rng.uniform(0.5, 2), "rho_max": rng.uniform(0.5, 2)}
    elif fam == "greenberg":
        p = {"c0": rng.uniform(0.5, 3), "rho_max": rng.uniform(0.5, 2)}
    elif fam == "underwood":
        p = {"c1": rng.uniform(0.1, 1), "c2": rng.uniform(0.5, 1.5), "rho_cap": 1.0}
    return FluxModel(fam, p)


@pytest.mark.parametrize("fam", FAMILIES)
def test_derivative_matches_finite_differences(fam):
    rng = np.random.default_rng(7)
    h = 1e-7
    for _ in range(150):
        m = _random_model(rng, fam)
        top = m.u_max
        r = rng.uniform(0.02 * top, 0.98 * top)
        if fam in ("triangular_sym", "triangular_skw") and abs(r - m.rho_c) < 1e-4:
            continue
        if fam == "trapezoidal" and min(abs(r - 0.2), abs(r - 0.8)) < 1e-4:
            continue
        fd = (m.flux_value(r + h) - m.flux_value(r - h)) / (2 * h)
        assert m.flux_derivative(r) == pytest.approx(fd, abs=1e-6)


@pytest.mark.parametrize("fam", CONCAVE)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_concavity(fam, a, b, lam):
    m = FluxModel(fam)
    a, b = a * m.u_max, b * m.u_max
    mid = lam * a + (1 - lam) * b
    assert m.flux_value(mid) >= lam * m.flux_value(a) + (1 - lam) * m.flux_value(b) - 1e-12


@pytest.mark.parametrize("fam", CONCAVE)
def test_envelope_and_sup(fam):
    rng = np.random.default_rng(3)
    m = FluxModel(fam)
    lo, hi = m.speed_range
    if not np.isfinite(lo):
        lo = -50.0
    if not np.isfinite(hi):
        hi = 50.0
    u = rng.uniform(lo, hi, 1000)
    rho = rng.uniform(0, m.u_max, 1000)
    R = m.legendre_transform(u)
    arg = -m.legendre_derivative(u)
    np.testing.assert_allclose(R + u * arg, m.flux_value(arg), atol=1e-10)
    assert np.all(R >= m.flux_value(rho) - u * rho - 1e-10)


def test_json_roundtrip_and_unknown_params(tmp_path):
    m = FluxModel("trapezoidal", {"w": -1.3})
    back = FluxModel.from_json(m.to_json())
    assert back == m
    assert json.loads(m.to_json())["family"] == "trapezoidal"
    with pytest.raises(ValueError, match="unknown"):
        FluxModel("greenshields", {"bogus": 1.0})
    p = tmp_path / "m.json"
    p.write_text(m.to_json())
    assert load_model(str(p)) == m
    assert load_model("greenshields:v_max=2").params["v_max"] == 2.0


def test_parameter_validation():
    with pytest.raises(ValueError):
        FluxModel("triangular_sym", {"w": 1.0})
    with pytest.raises(ValueError):
        FluxModel("trapezoidal", {"rho_c1": 0.9})
    with pytest.raises(ValueError):
        FluxModel("greenshields", {"v_max": -1.0})
    with pytest.raises(UnsupportedFamilyError):
        FluxModel("nope")


def test_underwood_cap_and_greenberg_limit():
    u = FluxModel("underwood")
    assert u.u_max == 1.0
    g = FluxModel("greenberg")
    assert g.flux_value(0.0) == 0.0
    assert g.flux_value(1.0) == pytest.approx(0.0, abs=1e-15)
