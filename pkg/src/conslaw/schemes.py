"""Conservative finite-volume solvers with classical numerical fluxes."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from conslaw.flux import FluxModel
from conslaw.grid import BoundaryTrace, Discretization, SolutionGrid

SCHEMES = ("godunov", "lxf", "eo", "eno3", "weno5")
FIRST_ORDER = ("godunov", "lxf", "eo")
WENO_EPS = 1e-6
WENO_LINEAR = (0.1, 0.6, 0.3)
CFL_FAIL_SLACK = 1e-9


class CFLError(ValueError):
    pass


class CFLWarning(UserWarning):
    pass


# ----------------------------------------------------------------------
# first-order fluxes


def godunov_flux(model: FluxModel, u_left, u_right):
    ul = np.asarray(u_left, dtype=float)
    ur = np.asarray(u_right, dtype=float)
    fl, fr = model._f(ul), model._f(ur)
    if model.is_convex:
        # min over [ul, ur] when increasing, max over [ur, ul] otherwise
        crosses = (ul < 0) & (ur > 0)
        rising = np.where(crosses, 0.0, np.minimum(fl, fr))
        out = np.where(ul <= ur, rising, np.maximum(fl, fr))
    else:
        rc = model.rho_c
        fc = model._f(np.asarray(rc))
        falling = np.where(ur >= rc, fr, np.where(ul <= rc, fl, fc))
        out = np.where(ul <= ur, np.minimum(fl, fr), falling)
    return out if out.ndim else float(out)


def engquist_osher_flux(model: FluxModel, u_left, u_right):
    ul = np.asarray(u_left, dtype=float)
    ur = np.asarray(u_right, dtype=float)
    if model.is_convex:
        f0 = model._f(np.asarray(0.0))
        out = model._f(np.maximum(ul, 0.0)) + model._f(np.minimum(ur, 0.0)) - f0
    else:
        rc = model.rho_c
        fc = model._f(np.asarray(rc))
        out = model._f(np.minimum(ul, rc)) + model._f(np.maximum(ur, rc)) - fc
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class NumericalFluxSpec:
    scheme: str
    model: FluxModel
    lxf_speed_mode: str = "sup"
    cfl_check: str = "error"
    _sup_speed: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.lxf_speed_mode not in ("sup", "mesh"):
            raise ValueError("lxf_speed_mode must be 'sup' or 'mesh'")
        if self.cfl_check not in ("error", "warn", "off"):
            raise ValueError("cfl_check must be 'error', 'warn' or 'off'")
        sup = self.model.max_wave_speed(0.0, self.model.u_max)
        object.__setattr__(self, "_sup_speed", sup)

    @property
    def order(self) -> int:
        return {"eno3": 3, "weno5": 5}.get(self.scheme, 1)

    @property
    def ghost_width(self) -> int:
        return 1 if self.scheme in FIRST_ORDER else 3

    def lxf_speed(self, dx: float, dt: float) -> float:
        if self.lxf_speed_mode == "mesh":
            return dx / dt
        if not np.isfinite(self._sup_speed):
            raise ValueError(f"{self.model.family}: unbounded wave speed, use lxf_speed_mode='mesh'")
        return self._sup_speed

    def interface_flux(self, u_left, u_right, dx: float = 1.0, dt: float = 1.0):
        """Two-point flux; ENO/WENO use Godunov on the reconstructed pair."""
        if self.scheme == "lxf":
            return lax_friedrichs_flux(self, u_left, u_right, dx, dt)
        if self.scheme == "eo":
            return engquist_osher_flux(self.model, u_left, u_right)
        return godunov_flux(self.model, u_left, u_right)


def lax_friedrichs_flux(spec: NumericalFluxSpec, u_left, u_right, dx: float = 1.0, dt: float = 1.0):
    ul = np.asarray(u_left, dtype=float)
    ur = np.asarray(u_right, dtype=float)
    c = spec.lxf_speed(dx, dt)
    out = 0.5 * (spec.model._f(ul) + spec.model._f(ur)) - 0.5 * c * (ur - ul)
    return out if out.ndim else float(out)


def lipschitz_constant(flux_fn, u_max: float, n: int = 201) -> float:
    """Numerical Lipschitz constant of a two-point flux on [0, u_max]^2 (diagnostic)."""
    u = np.linspace(0.0, u_max, n)
    ul, ur = np.meshgrid(u, u, indexing="ij")
    table = np.asarray(flux_fn(ul, ur), dtype=float)
    h = u[1] - u[0]
    dl = np.abs(np.diff(table, axis=0)) / h
    dr = np.abs(np.diff(table, axis=1)) / h
    return float(max(dl.max(), dr.max()))


# ----------------------------------------------------------------------
# reconstructions; windows are (..., 6) arrays u_{j-3}..u_{j+2} around interface j-1/2


def _weno_left(a, b, c, d, e):
    """Value at the right face of cell c from cells a..e (left-biased)."""
    q0 = (2 * a - 7 * b + 11 * c) / 6
    q1 = (-b + 5 * c + 2 * d) / 6
    q2 = (2 * c + 5 * d - e) / 6
    b0 = 13 / 12 * (a - 2 * b + c) ** 2 + 0.25 * (a - 4 * b + 3 * c) ** 2
    b1 = 13 / 12 * (b - 2 * c + d) ** 2 + 0.25 * (b - d) ** 2
    b2 = 13 / 12 * (c - 2 * d + e) ** 2 + 0.25 * (3 * c - 4 * d + e) ** 2
    a0 = WENO_LINEAR[0] / (WENO_EPS + b0) ** 2
    a1 = WENO_LINEAR[1] / (WENO_EPS + b1) ** 2
    a2 = WENO_LINEAR[2] / (WENO_EPS + b2) ** 2
    return (a0 * q0 + a1 * q1 + a2 * q2) / (a0 + a1 + a2)


def _eno_left(a, b, c, d, e):
    """ENO3 value at the right face of cell c, stencil grown by divided differences."""
    d1l, d1r = c - b, d - c
    # first extension: left (start at b) or right (start at c)
    go_left = np.abs(d1l) < np.abs(d1r)
    dd2_ll = a - 2 * b + c
    dd2_c = b - 2 * c + d
    dd2_rr = c - 2 * d + e
    # candidate shifts r: 2 -> {a,b,c}, 1 -> {b,c,d}, 0 -> {c,d,e}
    r = np.where(
        go_left,
        np.where(np.abs(dd2_ll) < np.abs(dd2_c), 2, 1),
        np.where(np.abs(dd2_c) < np.abs(dd2_rr), 1, 0),
    )
    q2 = (2 * a - 7 * b + 11 * c) / 6
    q1 = (-b + 5 * c + 2 * d) / 6
    q0 = (2 * c + 5 * d - e) / 6
    return np.where(r == 2, q2, np.where(r == 1, q1, q0))


def _reconstruct(window, kernel):
    w = np.asarray(window, dtype=float)
    u = [w[..., k] for k in range(6)]
    left = kernel(u[0], u[1], u[2], u[3], u[4])
    right = kernel(u[5], u[4], u[3], u[2], u[1])
    return left, right


def weno5_interface_states(window):
    return _reconstruct(window, _weno_left)


def eno3_interface_states(window):
    return _reconstruct(window, _eno_left)


# ----------------------------------------------------------------------
# stepping


def _padded(state, ghosts):
    gl, gr = ghosts
    state = np.asarray(state, dtype=float)
    gl = np.broadcast_to(np.asarray(gl, dtype=float), state.shape[:-1] + (np.shape(gl)[-1],))
    gr = np.broadcast_to(np.asarray(gr, dtype=float), state.shape[:-1] + (np.shape(gr)[-1],))
    return np.concatenate([gl, state, gr], axis=-1)


def interface_fluxes(state, spec: NumericalFluxSpec, ghosts, dx: float, dt: float):
    """Fluxes at the n_cells + 1 interfaces, F_{-1/2} .. F_{N-1/2}."""
    n = np.shape(state)[-1]
    g = spec.ghost_width
    gl, gr = ghosts
    if np.shape(gl)[-1] < g or np.shape(gr)[-1] < g:
        raise ValueError(f"{spec.scheme} needs {g} ghost cells per side")
    p = _padded(state, (np.asarray(gl)[..., -g:], np.asarray(gr)[..., :g]))
    if spec.scheme in FIRST_ORDER:
        return spec.interface_flux(p[..., :-1], p[..., 1:], dx, dt)
    idx = np.arange(n + 1)[:, None] + np.arange(6)[None, :]
    windows = p[..., idx]
    kernel = _weno_left if spec.scheme == "weno5" else _eno_left
    ul, ur = _reconstruct(windows, kernel)
    ul = np.clip(ul, 0.0, spec.model.u_max)
    ur = np.clip(ur, 0.0, spec.model.u_max)
    return godunov_flux(spec.model, ul, ur)


def check_cfl(spec: NumericalFluxSpec, state, ghosts, dx: float, dt: float, limit: float = 1.0) -> float:
    """Courant number over the data range present; raises or warns per ``spec.cfl_check``."""
    if spec.cfl_check == "off":
        return float("nan")
    vals = _padded(state, ghosts)
    lo = max(float(np.min(vals)), 0.0)
    hi = min(float(np.max(vals)), spec.model.u_max)
    speed = spec.model.max_wave_speed(lo, max(lo, hi))
    if spec.scheme == "lxf" and spec.lxf_speed_mode == "sup":
        speed = max(speed, spec._sup_speed)
    courant = dt / dx * speed
    if courant > limit * (1 + CFL_FAIL_SLACK):
        msg = f"CFL violated: dt/dx * max|f'| = {courant:.6g} > {limit:.6g}"
        if spec.cfl_check == "error":
            raise CFLError(msg)
        warnings.warn(msg, CFLWarning, stacklevel=3)
    elif courant >= limit * (1 - 1e-12):
        warnings.warn(f"CFL at its limit: {courant:.6g}", CFLWarning, stacklevel=3)
    return courant


def conservative_update(state, fluxes, lam: float):
    return state + lam * (fluxes[..., :-1] - fluxes[..., 1:])


def fv_step(
    state,
    spec: NumericalFluxSpec,
    ghosts,
    disc: Discretization,
    clip: bool = False,
    return_boundary_flux: bool = False,
):
    """One timestep. First-order schemes use forward Euler, ENO/WENO use SSP-RK3.

    The returned boundary flux (when requested) is the time-weighted flux the
    update actually used at the two window edges, so mass telescopes exactly.
    """
    dx, dt = disc.dx, disc.dt
    lam = dt / dx
    state = np.asarray(state, dtype=float)
    check_cfl(spec, state, ghosts, dx, dt)
    if spec.scheme in FIRST_ORDER:
        fl = interface_fluxes(state, spec, ghosts, dx, dt)
        new = conservative_update(state, fl, lam)
        bflux = np.stack([fl[..., 0], fl[..., -1]], axis=-1)
    else:
        f1 = interface_fluxes(state, spec, ghosts, dx, dt)
        s1 = conservative_update(state, f1, lam)
        f2 = interface_fluxes(s1, spec, ghosts, dx, dt)
        s2 = 0.75 * state + 0.25 * conservative_update(s1, f2, lam)
        f3 = interface_fluxes(s2, spec, ghosts, dx, dt)
        new = state / 3 + 2 / 3 * conservative_update(s2, f3, lam)
        fl = (f1 + f2 + 4 * f3) / 6
        bflux = np.stack([fl[..., 0], fl[..., -1]], axis=-1)
    if clip:
        new = np.clip(new, 0.0, spec.model.u_max)
    if return_boundary_flux:
        return new, bflux
    return new


@dataclass
class Rollout:
    grid: SolutionGrid
    boundary_flux: np.ndarray  # (n_steps, 2)

    @property
    def mass_mismatch(self) -> np.ndarray:
        from conslaw.grid import mass_ledger

        return mass_ledger(self.grid, self.boundary_flux)


def fv_rollout(
    ic_field,
    spec: NumericalFluxSpec,
    trace: BoundaryTrace,
    disc: Discretization,
    clip: bool = False,
) -> Rollout:
    """Autoregressive rollout from cell averages ``ic_field``."""
    u0 = np.asarray(ic_field, dtype=float)
    if u0.shape != (disc.n_cells,):
        raise ValueError(f"initial field has shape {u0.shape}, expected ({disc.n_cells},)")
    if trace.n_steps < disc.n_steps:
        raise ValueError(f"boundary trace has {trace.n_steps} steps, need {disc.n_steps}")
    out = np.empty((disc.n_steps + 1, disc.n_cells))
    bflux = np.empty((disc.n_steps, 2))
    out[0] = u0
    g = spec.ghost_width
    for n in range(disc.n_steps):
        out[n + 1], bflux[n] = fv_step(out[n], spec, trace.ghosts(n, g), disc, clip, True)
    return Rollout(SolutionGrid(disc, out), bflux)


def fv_rollout_batch(
    ic_fields: np.ndarray, spec: NumericalFluxSpec, ghosts_left, ghosts_right, disc: Discretization, clip: bool = False
) -> np.ndarray:
    """Vectorized rollouts of several initial fields.

    ``ghosts_left``/``ghosts_right`` have shape (batch, n_steps, width). Returns
    (batch, n_steps + 1, n_cells).
    """
    u = np.asarray(ic_fields, dtype=float)
    out = np.empty((u.shape[0], disc.n_steps + 1, disc.n_cells))
    out[:, 0] = u
    g = spec.ghost_width
    gl_all = np.asarray(ghosts_left)
    gr_all = np.asarray(ghosts_right)
    for n in range(disc.n_steps):
        ghosts = (_ghost_cols(gl_all[:, n], g, "left"), _ghost_cols(gr_all[:, n], g, "right"))
        out[:, n + 1] = fv_step(out[:, n], spec, ghosts, disc, clip)
    return out


def _ghost_cols(vals, width, side):
    have = vals.shape[-1]
    if have >= width:
        return vals[..., have - width :] if side == "left" else vals[..., :width]
    pad = width - have
    if side == "left":
        return np.concatenate([np.repeat(vals[..., :1], pad, axis=-1), vals], axis=-1)
    return np.concatenate([vals, np.repeat(vals[..., -1:], pad, axis=-1)], axis=-1)
