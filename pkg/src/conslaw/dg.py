"""Discontinuous Galerkin solver on a modal Legendre basis with SSP-RK3 stepping.

On cell j with local coordinate xi in [-1, 1] the solution is
``u = sum_l c_l P_l(xi)``; the mass matrix is diagonal with entries
``dx / (2l + 1)`` and ``c_0`` is the cell average.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as L

from conslaw.flux import FluxModel
from conslaw.grid import BoundaryTrace, Discretization, SolutionGrid
from conslaw.schemes import CFL_FAIL_SLACK, CFLError, CFLWarning, Rollout, godunov_flux

MAX_DEGREE = 2
LIMITERS = ("minmod", "none")


@dataclass
class DGState:
    coeffs: np.ndarray  # (n_cells, k + 1)

    def __post_init__(self):
        self.coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if self.degree > MAX_DEGREE:
            raise ValueError(f"DG degree must be <= {MAX_DEGREE}")

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    @property
    def averages(self) -> np.ndarray:
        return self.coeffs[:, 0]

    def evaluate(self, xi) -> np.ndarray:
        """Values at local coordinates ``xi`` in every cell, shape (n_cells, len(xi))."""
        return self.coeffs @ _basis(self.degree, np.atleast_1d(xi)).T


def _basis(k: int, xi: np.ndarray) -> np.ndarray:
    """P_l(xi) as a (len(xi), k + 1) matrix."""
    return np.stack([L.legval(xi, np.eye(k + 1)[l]) for l in range(k + 1)], axis=1)


def _basis_deriv(k: int, xi: np.ndarray) -> np.ndarray:
    return np.stack([L.legval(xi, L.legder(np.eye(k + 1)[l])) for l in range(k + 1)], axis=1)


class _Operators:
    def __init__(self, k: int):
        self.k = k
        nodes, weights = L.leggauss(k + 2)
        self.nodes = nodes
        self.weights = weights
        self.vq = _basis(k, nodes)
        # weighted derivative matrix so that volume = f(u_q) @ dq
        self.dq = weights[:, None] * _basis_deriv(k, nodes)
        self.sign = (-1.0) ** np.arange(k + 1)
        self.scale = 2 * np.arange(k + 1) + 1.0


def _check_degree(k: int) -> None:
    if k not in range(MAX_DEGREE + 1):
        raise ValueError(f"unsupported DG degree {k}; choose 0, 1 or 2")


def dg_project(profile, disc: Discretization, k: int = 1) -> DGState:
    """L2 projection onto degree-k polynomials per cell.

    A piecewise-constant datum (anything with ``breakpoints`` and ``values``) is
    projected exactly; a callable uses (k+2)-point Gauss-Legendre quadrature; an
    array of cell averages becomes a degree-k state with vanishing higher modes.
    """
    _check_degree(k)
    n = disc.n_cells
    if hasattr(profile, "breakpoints"):
        return DGState(_project_piecewise(profile, disc, k))
    if callable(profile):
        ops = _Operators(k)
        centers = disc.centers
        x = centers[:, None] + 0.5 * disc.dx * ops.nodes[None, :]
        vals = np.asarray(profile(x), dtype=float)
        coeffs = 0.5 * ops.scale * ((vals * ops.weights) @ ops.vq)
        return DGState(coeffs)
    field = np.asarray(profile, dtype=float)
    if field.shape != (n,):
        raise ValueError(f"cell averages have shape {field.shape}, expected ({n},)")
    coeffs = np.zeros((n, k + 1))
    coeffs[:, 0] = field
    return DGState(coeffs)


def _project_piecewise(ic, disc: Discretization, k: int) -> np.ndarray:
    bp = np.asarray(ic.breakpoints)
    vals = np.asarray(ic.values)
    edges = disc.edges
    if edges[0] < bp[0] - 1e-12 or edges[-1] > bp[-1] + 1e-12:
        raise ValueError("profile does not cover the DG window")
    # antiderivatives of P_l on [-1, 1]
    anti = [L.legint(np.eye(k + 1)[l], lbnd=-1) for l in range(k + 1)]
    coeffs = np.zeros((disc.n_cells, k + 1))
    for j in range(disc.n_cells):
        a, b = edges[j], edges[j + 1]
        lo = max(np.searchsorted(bp, a, side="right") - 1, 0)
        hi = min(np.searchsorted(bp, b, side="left"), len(vals))
        for p in range(lo, hi):
            s = max(bp[p], a)
            e = min(bp[p + 1], b)
            if e <= s:
                continue
            xs = 2 * (s - a) / (b - a) - 1
            xe = 2 * (e - a) / (b - a) - 1
            for l in range(k + 1):
                coeffs[j, l] += vals[p] * (L.legval(xe, anti[l]) - L.legval(xs, anti[l]))
    return 0.5 * coeffs * (2 * np.arange(k + 1) + 1.0)


def dg_rhs(state: DGState, model: FluxModel, ghosts, dx: float, return_fluxes: bool = False):
    """Time derivative of the modal coefficients.

    ``ghosts`` are constant states beyond each edge: (left, right) scalars or
    arrays whose innermost entry touches the domain.
    """
    ops = _Operators(state.degree)
    c = state.coeffs
    gl = float(np.atleast_1d(ghosts[0])[-1])
    gr = float(np.atleast_1d(ghosts[1])[0])
    right_trace = c.sum(axis=1)  # u at xi = +1
    left_trace = c @ ops.sign  # u at xi = -1
    u_minus = np.concatenate([[gl], right_trace])
    u_plus = np.concatenate([left_trace, [gr]])
    u_minus = np.clip(u_minus, 0.0, model.u_max)
    u_plus = np.clip(u_plus, 0.0, model.u_max)
    F = godunov_flux(model, u_minus, u_plus)
    uq = np.clip(c @ ops.vq.T, 0.0, model.u_max)
    volume = model._f(uq) @ ops.dq
    rhs = ops.scale / dx * (volume - F[1:, None] + ops.sign * F[:-1, None])
    if return_fluxes:
        return rhs, F
    return rhs


def _minmod(a, b, c):
    s = np.sign(a)
    same = (s == np.sign(b)) & (s == np.sign(c))
    return np.where(same, s * np.minimum(np.minimum(np.abs(a), np.abs(b)), np.abs(c)), 0.0)


def minmod_limit(state: DGState, ghosts) -> DGState:
    """Minmod slope limiter (TVB constant 0); cell averages are left untouched."""
    c = state.coeffs.copy()
    k = state.degree
    if k == 0:
        return DGState(c)
    gl = float(np.atleast_1d(ghosts[0])[-1])
    gr = float(np.atleast_1d(ghosts[1])[0])
    avg = np.concatenate([[gl], c[:, 0], [gr]])
    fwd = avg[2:] - avg[1:-1]
    bwd = avg[1:-1] - avg[:-2]
    if k == 1:
        c[:, 1] = _minmod(c[:, 1], fwd, bwd)
        return DGState(c)
    up = c[:, 1] + c[:, 2]
    down = c[:, 1] - c[:, 2]
    up_l = _minmod(up, fwd, bwd)
    down_l = _minmod(down, fwd, bwd)
    touched = (np.abs(up_l - up) > 1e-14) | (np.abs(down_l - down) > 1e-14)
    c[:, 1] = np.where(touched, _minmod(c[:, 1], fwd, bwd), c[:, 1])
    c[:, 2] = np.where(touched, 0.0, c[:, 2])
    return DGState(c)


def dg_cfl_limit(k: int) -> float:
    return 1.0 / (2 * k + 1)


def _check_cfl(model: FluxModel, state: DGState, ghosts, dx: float, dt: float, mode: str) -> None:
    if mode == "off":
        return
    vals = np.concatenate([np.atleast_1d(ghosts[0]), state.averages, np.atleast_1d(ghosts[1])])
    lo = max(float(vals.min()), 0.0)
    hi = min(float(vals.max()), model.u_max)
    courant = dt / dx * model.max_wave_speed(lo, max(lo, hi))
    limit = dg_cfl_limit(state.degree)
    if courant > limit * (1 + CFL_FAIL_SLACK):
        msg = f"DG CFL violated: {courant:.6g} > 1/(2k+1) = {limit:.6g}"
        if mode == "error":
            raise CFLError(msg)
        warnings.warn(msg, CFLWarning, stacklevel=3)


def ssp_rk3_step(
    state: DGState,
    model: FluxModel,
    ghosts,
    dx: float,
    dt: float,
    limiter: str = "minmod",
    cfl_check: str = "error",
    return_boundary_flux: bool = False,
):
    if limiter not in LIMITERS:
        raise ValueError(f"unknown limiter {limiter!r}")
    _check_cfl(model, state, ghosts, dx, dt, cfl_check)

    def lim(s):
        return minmod_limit(s, ghosts) if limiter == "minmod" else s

    c0 = state.coeffs
    r1, f1 = dg_rhs(state, model, ghosts, dx, True)
    s1 = lim(DGState(c0 + dt * r1))
    r2, f2 = dg_rhs(s1, model, ghosts, dx, True)
    s2 = lim(DGState(0.75 * c0 + 0.25 * (s1.coeffs + dt * r2)))
    r3, f3 = dg_rhs(s2, model, ghosts, dx, True)
    out = lim(DGState(c0 / 3 + 2 / 3 * (s2.coeffs + dt * r3)))
    if return_boundary_flux:
        fl = (f1 + f2 + 4 * f3) / 6
        return out, np.array([fl[0], fl[-1]])
    return out


def dg_rollout(
    ic,
    model: FluxModel,
    trace: BoundaryTrace,
    disc: Discretization,
    k: int = 1,
    limiter: str = "minmod",
    cfl_check: str = "error",
) -> Rollout:
    """Cell averages (mode 0) per step, with the boundary fluxes actually used."""
    _check_degree(k)
    state = ic if isinstance(ic, DGState) else dg_project(ic, disc, k)
    if trace.n_steps < disc.n_steps:
        raise ValueError(f"boundary trace has {trace.n_steps} steps, need {disc.n_steps}")
    if limiter == "minmod":
        state = minmod_limit(state, trace.ghosts(0, 1) if disc.n_steps else (state.averages[:1], state.averages[-1:]))
    out = np.empty((disc.n_steps + 1, disc.n_cells))
    bflux = np.empty((disc.n_steps, 2))
    out[0] = state.averages
    for n in range(disc.n_steps):
        state, bflux[n] = ssp_rk3_step(state, model, trace.ghosts(n, 1), disc.dx, disc.dt, limiter, cfl_check, True)
        out[n + 1] = state.averages
    return Rollout(SolutionGrid(disc, out), bflux)
