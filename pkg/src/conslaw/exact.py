"""Entropy solutions: single Riemann problems and the Lax-Hopf construction.

The Lax-Hopf solver works on the Moskowitz (cumulative count) function M with
``rho = -dM/dx`` and ``f(rho) = dM/dt``. For a piecewise-constant initial datum
M is the pointwise minimum of one closed-form component per piece; each
component is the Hopf-Lax infimum over its own piece,

    M_i(t, x) = min_{y in [x_i, x_{i+1}]}  M_0(y) + t R((x - y) / t),

which yields the transport branch when the minimizer is interior and the two
fan branches when it sits on a piece boundary. Convex fluxes are handled by the
reflection x -> -x, which turns them into concave ones.

Cell averages are exact differences of M across the cell edges, so exact grids
carry no quadrature error even in cells cut by a shock.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from conslaw.flux import FluxModel
from conslaw.grid import BoundaryTrace, Discretization, SolutionGrid


class DomainExtensionError(ValueError):
    """The initial datum does not cover the domain of dependence of a point."""


@dataclass(frozen=True)
class PiecewiseConstantIC:
    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        bp = tuple(float(x) for x in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 1 or len(bp) != len(vals) + 1:
            raise ValueError("need len(breakpoints) == len(values) + 1 >= 2")
        if any(b <= a for a, b in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def riemann(cls, left: float, right: float, x0: float, lo: float, hi: float) -> PiecewiseConstantIC:
        return cls((lo, x0, hi), (left, right))

    @property
    def n_pieces(self) -> int:
        return len(self.values)

    def check_range(self, u_max: float) -> None:
        if min(self.values) < 0 or max(self.values) > u_max * (1 + 1e-12):
            raise ValueError(f"initial values must lie in [0, {u_max}]")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(self.breakpoints, x, side="right") - 1, 0, self.n_pieces - 1)
        return np.asarray(self.values)[idx]

    def offsets(self) -> np.ndarray:
        """b_i such that M_0(x) = -rho_i x + b_i on piece i, with M_0(x_0) = 0."""
        bp = np.asarray(self.breakpoints)
        vals = np.asarray(self.values)
        mass_before = np.concatenate([[0.0], np.cumsum(np.diff(bp) * vals)[:-1]])
        return vals * bp[:-1] - mass_before

    def cumulative(self, x) -> np.ndarray:
        """Integral of the profile from the first breakpoint to ``x``."""
        bp = np.asarray(self.breakpoints)
        x = np.clip(np.asarray(x, dtype=float), bp[0], bp[-1])
        idx = np.clip(np.searchsorted(bp, x, side="right") - 1, 0, self.n_pieces - 1)
        vals = np.asarray(self.values)
        return vals[idx] * x - self.offsets()[idx]

    def extended(self, left: float, right: float) -> PiecewiseConstantIC:
        """Extend the outer pieces with their edge values to cover [left, right]."""
        bp = list(self.breakpoints)
        bp[0] = min(bp[0], left)
        bp[-1] = max(bp[-1], right)
        return PiecewiseConstantIC(tuple(bp), self.values)

    def reflected(self) -> PiecewiseConstantIC:
        return PiecewiseConstantIC(tuple(-b for b in reversed(self.breakpoints)), tuple(reversed(self.values)))

    def to_dict(self) -> dict:
        return {"breakpoints": list(self.breakpoints), "values": list(self.values)}

    @classmethod
    def from_dict(cls, doc: dict) -> PiecewiseConstantIC:
        try:
            return cls(tuple(doc["breakpoints"]), tuple(doc["values"]))
        except KeyError as exc:
            raise ValueError(f"initial condition JSON missing field {exc}") from None

    @classmethod
    def load(cls, path) -> PiecewiseConstantIC:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


# ----------------------------------------------------------------------
# Riemann problems


def riemann_solution(model: FluxModel, rho_left: float, rho_right: float, x0: float, t, x):
    """Entropy solution of a single Riemann problem at (t, x).

    Exactly on a shock line the right state is returned.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("riemann_solution needs t > 0")
    x = np.asarray(x, dtype=float)
    xi = (x - x0) / t
    rl, rr = float(rho_left), float(rho_right)
    if rl == rr:
        out = np.full(np.broadcast(t, x).shape, rl)
    else:
        shock = (rl > rr) if model.is_convex else (rl < rr)
        if shock:
            s = (model._f(np.array(rr)) - model._f(np.array(rl))) / (rr - rl)
            out = np.where(xi < s, rl, rr)
        else:
            lam1 = model._df(np.array(rl), "right" if model.is_convex else "left")
            lam2 = model._df(np.array(rr), "left" if model.is_convex else "right")
            lo, hi = min(rl, rr), max(rl, rr)
            fan = model.inverse_derivative(xi, lo, hi)
            out = np.where(xi < lam1, rl, np.where(xi >= lam2, rr, fan))
    if out.ndim == 0:
        return float(out)
    return out


def shock_speed(model: FluxModel, rho_left: float, rho_right: float) -> float | None:
    """Rankine-Hugoniot speed when the Riemann problem produces a shock, else None."""
    rl, rr = float(rho_left), float(rho_right)
    if rl == rr or ((rl > rr) != model.is_convex):
        return None
    return float((model._f(np.array(rr)) - model._f(np.array(rl))) / (rr - rl))


# ----------------------------------------------------------------------
# Lax-Hopf


class _ReflectedConvex:
    """Concave flux h(u) = -f(u) for Burgers, used in the reflected frame."""

    def __init__(self, model: FluxModel):
        self.u_max = model.u_max
        self.speed_range = (-self.u_max, 0.0)

    def _f(self, r):
        return -0.5 * r * r

    def _df(self, r, side="left"):
        return -r

    def argmax_density(self, u, side="left"):
        return np.clip(-np.asarray(u, dtype=float), 0.0, self.u_max)


class LaxHopf:
    """Exact solver for one piecewise-constant initial datum."""

    def __init__(self, model: FluxModel, ic: PiecewiseConstantIC):
        self.model = model
        self.ic = ic
        self.reflect = model.is_convex
        self._hopf = _ReflectedConvex(model) if self.reflect else model
        work = ic.reflected() if self.reflect else ic
        self._bp = np.asarray(work.breakpoints)
        self._rho = np.asarray(work.values)
        self._b = work.offsets()
        self._fprime = self._hopf._df(self._rho, "left")
        self._frho = self._hopf._f(self._rho)
        lo, hi = min(ic.values), max(ic.values)
        # characteristic speeds are confined to f' over the datum's range
        speeds = model._df(np.array([lo, hi]), "left"), model._df(np.array([lo, hi]), "right")
        all_s = np.concatenate(speeds)
        self.slowest = float(np.min(all_s))
        self.fastest = float(np.max(all_s))
        self.total_mass = float(np.dot(np.diff(ic.breakpoints), ic.values))

    def covers(self, t, x) -> np.ndarray:
        """True where the domain of dependence of (t, x) lies inside the datum."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        a, b = self.ic.breakpoints[0], self.ic.breakpoints[-1]
        with np.errstate(invalid="ignore"):
            left = np.where(t > 0, x - t * self.fastest, x)
            right = np.where(t > 0, x - t * self.slowest, x)
        tol = 1e-12 * max(1.0, abs(a), abs(b))
        return (left >= a - tol) & (right <= b + tol)

    def _components(self, t, x):
        """(M, rho) per component for concave-frame points; shapes (npts, npieces)."""
        h = self._hopf
        t = t[:, None]
        x = x[:, None]
        xl, xr = self._bp[:-1], self._bp[1:]
        y = np.clip(x - t * self._fprime, xl, xr)
        xi = (x - y) / t
        interior = (y > xl) & (y < xr)
        rho_fan = h.argmax_density(xi)
        r_val = h._f(rho_fan) - xi * rho_fan
        m = -self._rho * y + self._b + t * r_val
        rho = np.where(interior, self._rho, rho_fan)
        lo_s, hi_s = h.speed_range
        with np.errstate(invalid="ignore"):
            outside = (x < xl + t * lo_s) | (x > xr + t * hi_s)
        m = np.where(outside, np.inf, m)
        return m, rho

    def _solve_concave(self, t, x, chunk: int = 20000):
        npts = t.size
        m_out = np.empty(npts)
        rho_out = np.empty(npts)
        for start in range(0, npts, chunk):
            sl = slice(start, start + chunk)
            m, rho = self._components(t[sl], x[sl])
            k = np.argmin(m, axis=1)
            rows = np.arange(k.size)
            m_out[sl] = m[rows, k]
            rho_out[sl] = rho[rows, k]
        return m_out, rho_out

    def evaluate(self, t, x, check: bool = True):
        """Moskowitz value and density at arrays of points.

        The returned M satisfies dM/dx = -rho and dM/dt = f(rho) in the original
        frame (up to an additive constant).
        """
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        t, x = np.broadcast_arrays(t, x)
        shape = t.shape
        t = t.ravel()
        x = x.ravel()
        if np.any(t < 0):
            raise ValueError("Lax-Hopf evaluation needs t >= 0")
        if check and not np.all(self.covers(t, x)):
            bad = np.nonzero(~self.covers(t, x))[0][0]
            raise DomainExtensionError(
                f"point (t={t[bad]}, x={x[bad]}) depends on data outside "
                f"[{self.ic.breakpoints[0]}, {self.ic.breakpoints[-1]}]; widen the initial condition"
            )
        m = np.empty(t.size)
        rho = np.empty(t.size)
        zero = t == 0
        if np.any(zero):
            m[zero] = -self.ic.cumulative(x[zero])
            rho[zero] = self.ic(x[zero])
        pos = ~zero
        if np.any(pos):
            xs = -x[pos] if self.reflect else x[pos]
            mv, rv = self._solve_concave(t[pos], xs)
            if self.reflect:
                # reflected frame value, rebased so that M(0, x) = -int_{x_0}^{x} u
                mv = -mv - self.total_mass
            m[pos] = mv
            rho[pos] = rv
        return m.reshape(shape), rho.reshape(shape)

    def density(self, t, x, check: bool = True):
        return self.evaluate(t, x, check)[1]

    def moskowitz(self, t, x, check: bool = True):
        return self.evaluate(t, x, check)[0]


def moskowitz_component(model: FluxModel, i: int, ic: PiecewiseConstantIC, t: float, x: float):
    """Value of the i-th Moskowitz component at (t, x), or None outside its influence cone."""
    if t <= 0:
        raise ValueError("moskowitz_component needs t > 0")
    if model.is_convex:
        raise ValueError("components are defined for concave fluxes; convex ones are reflected")
    solver = LaxHopf(model, ic)
    m, _ = solver._components(np.array([float(t)]), np.array([float(x)]))
    val = m[0, i]
    return None if math.isinf(val) else float(val)


def lax_hopf_point(model: FluxModel, ic: PiecewiseConstantIC, t: float, x: float) -> float:
    """Density at a single point via the minimum over influencing components."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    solver = LaxHopf(model, ic)
    if not solver.covers(t, x):
        raise DomainExtensionError(
            f"({t}, {x}) is influenced by data outside the initial condition; widen it"
        )
    if t == 0:
        return float(ic(x))
    bp = np.asarray(ic.breakpoints)
    # index bounds of the pieces inside the backward cone
    lo_x = x - t * solver.fastest
    hi_x = x - t * solver.slowest
    j_lo = max(0, int(np.searchsorted(bp, lo_x, side="right")) - 2)
    j_hi = min(ic.n_pieces - 1, int(np.searchsorted(bp, hi_x, side="left")) + 1)
    best_m, best_rho = math.inf, float("nan")
    m, rho = solver._components(np.array([float(t)]), np.array([-x if solver.reflect else x]))
    order = range(ic.n_pieces) if solver.reflect else range(j_lo, j_hi + 1)
    for i in order:
        if m[0, i] < best_m:
            best_m, best_rho = m[0, i], rho[0, i]
    return float(best_rho)


# ----------------------------------------------------------------------
# exact grids


def exact_grid(
    model: FluxModel,
    ic: PiecewiseConstantIC,
    disc: Discretization,
    window_left: float | None = None,
    ghost_width: int = 3,
    method: str = "moskowitz",
) -> tuple[SolutionGrid, BoundaryTrace]:
    """Cell-averaged exact solution on a window plus its ghost-cell trace.

    The datum is extended with its edge values when it does not reach far
    enough for the window's domain of dependence. ``method="gauss"`` averages
    pointwise densities with 5-point Gauss-Legendre per cell instead of taking
    exact Moskowitz differences.
    """
    left = disc.x_origin if window_left is None else window_left
    edges = left + disc.dx * np.arange(-ghost_width, disc.n_cells + ghost_width + 1)
    solver = _covering_solver(model, ic, edges[0], edges[-1], disc.t_final)
    times = disc.times
    if method == "moskowitz":
        m = solver.moskowitz(times[:, None], edges[None, :])
        cells = (m[:, :-1] - m[:, 1:]) / disc.dx
    elif method == "gauss":
        nodes, weights = np.polynomial.legendre.leggauss(5)
        centers = 0.5 * (edges[:-1] + edges[1:])
        pts = centers[:, None] + 0.5 * disc.dx * nodes[None, :]
        rho = solver.density(times[:, None, None], pts[None, :, :])
        cells = 0.5 * np.tensordot(rho, weights, axes=([2], [0]))
    else:
        raise ValueError(f"unknown averaging method {method!r}")
    g = ghost_width
    interior = cells[:, g : g + disc.n_cells]
    grid = SolutionGrid(Discretization(disc.dx, disc.dt, disc.n_cells, disc.n_steps, left), interior)
    trace = BoundaryTrace(cells[:-1, :g], cells[:-1, g + disc.n_cells :])
    return grid, trace


def exact_boundary_flux(
    model: FluxModel, ic: PiecewiseConstantIC, disc: Discretization, window_left: float | None = None
) -> np.ndarray:
    """Time-averaged exact flux through the two window edges for every step, shape (n_steps, 2)."""
    left = disc.x_origin if window_left is None else window_left
    right = left + disc.length
    solver = _covering_solver(model, ic, left, right, disc.t_final)
    m = solver.moskowitz(disc.times[:, None], np.array([left, right])[None, :])
    return np.diff(m, axis=0) / disc.dt


def _covering_solver(model, ic, x_lo, x_hi, t_final) -> LaxHopf:
    probe = LaxHopf(model, ic)
    if not (probe.covers(t_final, x_lo) and probe.covers(t_final, x_hi)):
        reach_left = t_final * max(probe.fastest, 0.0)
        reach_right = t_final * max(-probe.slowest, 0.0)
        if not (math.isfinite(reach_left) and math.isfinite(reach_right)):
            raise DomainExtensionError("unbounded wave speed: cannot extend the initial condition")
        margin = 1e-9 * max(1.0, abs(x_lo), abs(x_hi))
        ic = ic.extended(x_lo - reach_left - margin, x_hi + reach_right + margin)
        probe = LaxHopf(model, ic)
    return probe
