"""Physical flux functions for scalar conservation laws.

Six LWR traffic flows plus inviscid Burgers. Every family exposes closed-form
values, one-sided derivatives, critical densities and the concave transform

    R(u) = sup_{rho in [0, u_max]} (f(rho) - u * rho)

used by the Lax-Hopf solver. All evaluators accept scalars or numpy arrays.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import lambertw

FAMILIES = (
    "greenshields",
    "triangular_sym",
    "triangular_skw",
    "trapezoidal",
    "greenberg",
    "underwood",
    "burgers",
)

DEFAULT_PARAMS: dict[str, dict[str, float]] = {
    "greenshields": {"v_max": 1.0, "rho_max": 1.0},
    "triangular_sym": {"v_max": 1.0, "w": -1.0, "rho_max": 1.0},
    "triangular_skw": {"v_max": 2.0, "w": -1.0, "rho_max": 1.0},
    # w = -1.3 is also in common use; pass it explicitly
    "trapezoidal": {"v_max": 1.0, "w": -1.5, "rho_c1": 0.2, "rho_c2": 0.8, "rho_max": 1.0},
    "greenberg": {"c0": 2.0, "rho_max": 1.0},
    "underwood": {"c1": 0.25, "c2": 1.0, "rho_cap": 1.0},
    "burgers": {"u_max": 1.0},
}

ALIASES = {
    "triangular": "triangular_sym",
    "triangularsym": "triangular_sym",
    "triangularskw": "triangular_skw",
}


class FluxDomainError(ValueError):
    """Raised when a density or speed falls outside a flux model's domain."""


class UnsupportedFamilyError(ValueError):
    pass


def _as_array(x):
    return np.asarray(x, dtype=float)


def _ret(out, like):
    out = np.asarray(out, dtype=float)
    if np.ndim(like) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class FluxModel:
    """A physical flux ``f`` from one of the supported families."""

    family: str
    params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        family = ALIASES.get(self.family.lower(), self.family.lower())
        if family not in FAMILIES:
            raise UnsupportedFamilyError(f"unknown flux family {self.family!r}")
        defaults = DEFAULT_PARAMS[family]
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise ValueError(f"unknown parameters for {family}: {sorted(unknown)}")
        merged = {**defaults, **{k: float(v) for k, v in self.params.items()}}
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "params", merged)
        self._validate()

    def _validate(self) -> None:
        p = self.params
        for key in ("rho_max", "rho_cap", "u_max", "rho_c1", "rho_c2", "v_max", "c0", "c1", "c2"):
            if key in p and not (p[key] > 0 and math.isfinite(p[key])):
                raise ValueError(f"{self.family}: parameter {key} must be positive, got {p[key]}")
        if "w" in p and not p["w"] < 0:
            raise ValueError(f"{self.family}: parameter w must be negative, got {p['w']}")
        if self.family == "trapezoidal":
            if not 0 < p["rho_c1"] < p["rho_c2"] < p["rho_max"]:
                raise ValueError("trapezoidal: need 0 < rho_c1 < rho_c2 < rho_max")
            s = self.plateau_slope
            if not p["w"] <= s <= p["v_max"]:
                raise ValueError("trapezoidal: transition slope must lie in [w, v_max] (concavity)")
        if self.family == "underwood" and p["rho_cap"] > 2 / p["c2"]:
            raise ValueError("underwood: rho_cap must not exceed 2/c2 (concavity)")

    # ------------------------------------------------------------------
    # derived constants

    @classmethod
    def from_name(cls, name: str, **params: float) -> FluxModel:
        return cls(name, params)

    @property
    def u_max(self) -> float:
        """Upper end of the working density interval."""
        p = self.params
        if self.family == "underwood":
            return p["rho_cap"]
        if self.family == "burgers":
            return p["u_max"]
        return p["rho_max"]

    @property
    def is_convex(self) -> bool:
        return self.family == "burgers"

    @property
    def plateau_slope(self) -> float:
        p = self.params
        return (p["w"] * (p["rho_c2"] - p["rho_max"]) - p["v_max"] * p["rho_c1"]) / (
            p["rho_c2"] - p["rho_c1"]
        )

    @property
    def rho_c(self) -> float:
        """Single density at which the flux peaks (lower end of a flat plateau)."""
        if self.family == "trapezoidal":
            p = self.params
            return p["rho_c2"] if self.plateau_slope > 0 else p["rho_c1"]
        return self.critical_density()

    def critical_density(self) -> float | tuple[float, float]:
        p = self.params
        fam = self.family
        if fam == "greenshields":
            return p["rho_max"] / 2
        if fam in ("triangular_sym", "triangular_skw"):
            return p["rho_max"] * p["w"] / (p["w"] - p["v_max"])
        if fam == "trapezoidal":
            return (p["rho_c1"], p["rho_c2"])
        if fam == "greenberg":
            return p["rho_max"] / math.e
        if fam == "underwood":
            return min(1.0 / p["c2"], p["rho_cap"])
        raise UnsupportedFamilyError("burgers flux is convex and has no interior maximum")

    @property
    def speed_range(self) -> tuple[float, float]:
        """(slowest, fastest) characteristic speed over [0, u_max]."""
        lo = float(self.flux_derivative(self.u_max, side="left"))
        hi = float(self.flux_derivative(0.0, side="right"))
        return (min(lo, hi), max(lo, hi))

    # ------------------------------------------------------------------
    # evaluation

    def _check_density(self, rho) -> None:
        r = _as_array(rho)
        if np.any(r < 0) or np.any(np.isnan(r)):
            raise FluxDomainError(f"{self.family}: density below 0 (min {np.nanmin(r)})")
        if np.any(r > self.u_max * (1 + 1e-12)):
            name = next(k for k in ("rho_max", "rho_cap", "u_max") if k in self.params)
            raise FluxDomainError(
                f"{self.family}: density above {name}={self.u_max} (max {np.max(r)})"
            )

    def flux_value(self, rho, check: bool = True):
        if check:
            self._check_density(rho)
        return _ret(self._f(_as_array(rho)), rho)

    __call__ = flux_value

    def _f(self, r: np.ndarray) -> np.ndarray:
        p = self.params
        fam = self.family
        if fam == "greenshields":
            return p["v_max"] * r * (1 - r / p["rho_max"])
        if fam in ("triangular_sym", "triangular_skw"):
            return np.minimum(p["v_max"] * r, p["w"] * (r - p["rho_max"]))
        if fam == "trapezoidal":
            s = self.plateau_slope
            return np.minimum.reduce(
                [
                    p["v_max"] * r,
                    p["v_max"] * p["rho_c1"] + s * (r - p["rho_c1"]),
                    p["w"] * (r - p["rho_max"]),
                ]
            )
        if fam == "greenberg":
            safe = np.where(r > 0, r, 1.0)
            return np.where(r > 0, p["c0"] * r * (np.log(p["rho_max"]) - np.log(safe)), 0.0)
        if fam == "underwood":
            return p["c1"] * r * np.exp(1 - p["c2"] * r)
        return 0.5 * r * r

    def flux_derivative(self, rho, side: str = "left", check: bool = True):
        """Derivative of the flux; at kinks ``side`` selects the one-sided limit."""
        if check:
            self._check_density(rho)
        return _ret(self._df(_as_array(rho), side), rho)

    def _df(self, r: np.ndarray, side: str = "left") -> np.ndarray:
        p = self.params
        fam = self.family
        left = side == "left"
        if fam == "greenshields":
            return p["v_max"] * (1 - 2 * r / p["rho_max"])
        if fam in ("triangular_sym", "triangular_skw"):
            rc = self.rho_c
            free = r <= rc if left else r < rc
            return np.where(free, p["v_max"], p["w"])
        if fam == "trapezoidal":
            c1, c2 = p["rho_c1"], p["rho_c2"]
            if left:
                return np.where(r <= c1, p["v_max"], np.where(r <= c2, self.plateau_slope, p["w"]))
            return np.where(r < c1, p["v_max"], np.where(r < c2, self.plateau_slope, p["w"]))
        if fam == "greenberg":
            safe = np.where(r > 0, r, 1.0)
            return np.where(r > 0, p["c0"] * (np.log(p["rho_max"]) - np.log(safe) - 1), np.inf)
        if fam == "underwood":
            return p["c1"] * np.exp(1 - p["c2"] * r) * (1 - p["c2"] * r)
        return r.copy()

    def max_wave_speed(self, lo: float = 0.0, hi: float | None = None) -> float:
        """sup of |f'| over [lo, hi]; endpoints and kinks suffice for every family."""
        hi = self.u_max if hi is None else hi
        if lo > hi:
            raise ValueError("max_wave_speed: need lo <= hi")
        pts = np.array([lo, hi], dtype=float)
        vals = [np.abs(self._df(pts, "left")), np.abs(self._df(pts, "right"))]
        return float(max(np.max(v) for v in vals))

    # ------------------------------------------------------------------
    # concave transform R(u) = sup_rho f(rho) - u rho

    def argmax_density(self, u, side: str = "left"):
        """argmax over [0, u_max] of f(rho) - u*rho, i.e. -R'(u). Unchecked, vectorized."""
        u = _as_array(u)
        p = self.params
        fam = self.family
        um = self.u_max
        left = side == "left"
        if fam == "greenshields":
            rho = 0.5 * p["rho_max"] * (1 - u / p["v_max"])
        elif fam in ("triangular_sym", "triangular_skw"):
            rc = self.rho_c
            # R'(u) one-sided: left derivative of R picks the larger argmax
            if left:
                rho = np.where(u > p["v_max"], 0.0, np.where(u > p["w"], rc, um))
                rho = np.where(u == p["v_max"], rc, rho)
            else:
                rho = np.where(u >= p["v_max"], 0.0, np.where(u >= p["w"], rc, um))
                rho = np.where(u == p["w"], rc, rho)
        elif fam == "trapezoidal":
            s = self.plateau_slope
            c1, c2 = p["rho_c1"], p["rho_c2"]
            v, w = p["v_max"], p["w"]
            if left:
                rho = np.select([u > v, u > s, u > w], [0.0, c1, c2], um)
                rho = np.where(u == v, c1, np.where(u == s, c2, np.where(u == w, um, rho)))
            else:
                rho = np.select([u >= v, u >= s, u >= w], [0.0, c1, c2], um)
        elif fam == "greenberg":
            rho = p["rho_max"] * np.exp(-1 - u / p["c0"])
        elif fam == "underwood":
            arg = np.maximum(u / p["c1"], -1 / math.e)
            z = np.real(lambertw(arg, 0))
            rho = (1 - z) / p["c2"]
            rho = np.where(u >= p["c1"] * math.e, 0.0, rho)
        else:
            # convex: sup of rho^2/2 - u rho sits at an endpoint
            rho = np.where(u * um > 0.5 * um * um, 0.0, um)
            if left:
                rho = np.where(u == 0.5 * um, um, rho)
        return np.clip(rho, 0.0, um)

    def _R(self, u: np.ndarray) -> np.ndarray:
        rho = self.argmax_density(u)
        return self._f(rho) - u * rho

    def _check_speed(self, u) -> None:
        lo, hi = self.speed_range
        ua = _as_array(u)
        tol = 1e-12 * max(1.0, abs(lo), abs(hi) if math.isfinite(hi) else 1.0)
        if np.any(ua < lo - tol) or np.any(ua > hi + tol):
            raise FluxDomainError(f"{self.family}: speed outside wave-speed range [{lo}, {hi}]")

    def legendre_transform(self, u, check: bool = True):
        if check:
            self._check_speed(u)
        return _ret(self._R(_as_array(u)), u)

    def legendre_derivative(self, u, side: str = "left", check: bool = True):
        """R'(u) = -argmax_rho (f(rho) - u rho)."""
        if check:
            self._check_speed(u)
        return _ret(-self.argmax_density(_as_array(u), side), u)

    def inverse_derivative(self, xi, lo: float, hi: float):
        """(f')^{-1}(xi) restricted to densities in [lo, hi] (rarefaction fans)."""
        xi = _as_array(xi)
        if self.is_convex:
            return np.clip(xi, lo, hi)
        return np.clip(self.argmax_density(xi), lo, hi)

    # ------------------------------------------------------------------
    # serialization

    def to_dict(self) -> dict[str, Any]:
        return {"family": self.family, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> FluxModel:
        if not isinstance(doc, dict) or "family" not in doc:
            raise ValueError("flux model JSON needs a 'family' field")
        extra = set(doc) - {"family", "params"}
        if extra:
            raise ValueError(f"unknown flux model fields: {sorted(extra)}")
        params = doc.get("params", {}) or {}
        for k, v in params.items():
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ValueError(f"params.{k}: expected a number")
        return cls(doc["family"], params)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> FluxModel:
        return cls.from_dict(json.loads(text))


def load_model(spec: str) -> FluxModel:
    """Parse a family name, ``name:key=val,...`` or a path to a JSON document."""
    if spec.endswith(".json"):
        with open(spec) as fh:
            return FluxModel.from_dict(json.load(fh))
    name, _, rest = spec.partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            k, _, v = item.partition("=")
            params[k.strip()] = float(v)
    return FluxModel(name, params)
