"""Evaluation statistics: error norms, winrates, DTW, convergence and flux diagnostics."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from conslaw.grid import SolutionGrid

WILSON_Z = 1.959964
REL_FLOOR_FRACTION = 1e-2


def _vals(g):
    return g.values if isinstance(g, SolutionGrid) else np.asarray(g, dtype=float)


def error_norms(pred, exact, rel_floor: float | None = None, u_max: float = 1.0) -> tuple[float, float, float]:
    """(L1, L2, Rel) as grid-wide means: |e|, e^2 (no root) and |e| / max(eps, |u|)."""
    p, e = _vals(pred), _vals(exact)
    if p.shape != e.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {e.shape}")
    eps = REL_FLOOR_FRACTION * u_max if rel_floor is None else rel_floor
    d = np.abs(p - e)
    return float(d.mean()), float((d * d).mean()), float((d / np.maximum(eps, np.abs(e))).mean())


# ----------------------------------------------------------------------
# winrates


def wilson_interval(successes: float, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    """Wilson score interval for a proportion; ``successes`` may be fractional (split ties)."""
    if n <= 0:
        return (0.0, 1.0)
    p = successes / n
    z2 = z * z
    denom = 1 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(max(p * (1 - p) / n + z2 / (4 * n * n), 0.0)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass
class WinrateTable:
    names: list[str]
    rate: np.ndarray  # rate[i, j]: share of ICs where i beats j (ties count half)
    wins: np.ndarray
    ties: np.ndarray
    n: int
    lower: np.ndarray
    upper: np.ndarray

    def to_dict(self) -> dict:
        def blank(m):
            out = m.astype(object)
            np.fill_diagonal(out, None)
            return out.tolist()

        return {
            "names": self.names,
            "n": self.n,
            "rate": blank(self.rate),
            "wins": blank(self.wins),
            "ties": blank(self.ties),
            "wilson_lower": blank(self.lower),
            "wilson_upper": blank(self.upper),
        }


def winrate_matrix(errors: dict[str, np.ndarray]) -> WinrateTable:
    """Pairwise winrates from per-IC scalar errors (lower wins, ties split 50/50)."""
    names = list(errors)
    arrs = [np.asarray(errors[k], dtype=float) for k in names]
    n = arrs[0].size if arrs else 0
    if any(a.size != n for a in arrs):
        raise ValueError("every scheme needs an error for every initial condition")
    k = len(names)
    wins = np.zeros((k, k), dtype=int)
    ties = np.zeros((k, k), dtype=int)
    for i in range(k):
        for j in range(k):
            wins[i, j] = int(np.sum(arrs[i] < arrs[j]))
            ties[i, j] = int(np.sum(arrs[i] == arrs[j]))
    score = wins + 0.5 * ties
    rate = score / n if n else np.full((k, k), np.nan)
    lo = np.zeros((k, k))
    hi = np.ones((k, k))
    for i in range(k):
        for j in range(k):
            lo[i, j], hi[i, j] = wilson_interval(score[i, j], n)
    return WinrateTable(names, rate, wins, ties, n, lo, hi)


# ----------------------------------------------------------------------
# DTW


def dtw_distance(a, b) -> float:
    """Dynamic time warping with absolute-difference cost, anchored at both ends."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("dtw needs nonempty series")
    cost = np.abs(a[:, None] - b[None, :])
    m = b.size
    prev = np.full(m + 1, np.inf)
    prev[0] = 0.0
    for i in range(a.size):
        cur = np.empty(m + 1)
        cur[0] = np.inf
        diag_up = np.minimum(prev[1:], prev[:-1])
        row = cost[i]
        for j in range(m):
            cur[j + 1] = row[j] + min(diag_up[j], cur[j])
        prev = cur
    return float(prev[m])


# ----------------------------------------------------------------------
# convergence


@dataclass
class ConvergenceTable:
    dx: list[float]
    dt: list[float]
    mean: list[float]
    std: list[float]
    order: float | None
    metric: str = "l2"

    def to_dict(self) -> dict:
        return asdict(self)


def fit_order(h, err) -> float | None:
    """Least-squares slope of log(err) against log(h); None when errors sit at round-off."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    ok = err > 1e-10
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(h[ok]), np.log(err[ok]), 1)[0])


_METRIC_INDEX = {"l1": 0, "l2": 1, "rel": 2}


def convergence_study(
    runner,
    model,
    ics,
    dts,
    ratio: float = 0.1,
    t_final: float = 0.5,
    window: tuple[float, float] = (0.0, 1.0),
    metric: str = "l2",
) -> ConvergenceTable:
    """Mean error against exact grids for a sequence of refinements at fixed dt/dx.

    ``runner(u0, trace, disc, ic)`` returns predicted values of shape
    (n_steps + 1, n_cells). ``metric`` picks the norm from ``error_norms``.
    """
    from conslaw.exact import exact_grid
    from conslaw.grid import Discretization

    if metric not in ("l1", "l2", "rms", "rel"):
        raise ValueError("metric must be l1, l2, rms or rel")
    dts = [float(d) for d in dts]
    if any(b >= a for a, b in zip(dts, dts[1:])):
        raise ValueError("refinement sequence must be strictly decreasing")
    dxs, means, stds = [], [], []
    for dt in dts:
        dx = dt / ratio
        n_cells = int(round((window[1] - window[0]) / dx))
        n_steps = int(round(t_final / dt))
        disc = Discretization(dx, dt, n_cells, n_steps, window[0])
        errs = []
        for ic in ics:
            grid, trace = exact_grid(model, ic, disc)
            pred = runner(grid.values[0], trace, disc, ic)
            norms = error_norms(pred, grid, u_max=model.u_max)
            if metric == "rms":
                errs.append(math.sqrt(norms[1]))
            else:
                errs.append(norms[_METRIC_INDEX[metric]])
        dxs.append(dx)
        means.append(float(np.mean(errs)))
        stds.append(float(np.std(errs)))
    return ConvergenceTable(dxs, dts, means, stds, fit_order(dxs, means), metric)


# ----------------------------------------------------------------------
# flux diagnostics


def flux_cross_sections(flux_fn, fixed_value: float, axis: str, u_max: float = 1.0, n: int = 200):
    """Sweep F(fixed, u) (axis='left' fixes the left state) or F(u, fixed) over [0, u_max]."""
    u = np.linspace(0.0, u_max, n)
    fixed = np.full(n, float(fixed_value))
    if axis == "left":
        return u, np.asarray(flux_fn(fixed, u), dtype=float)
    if axis == "right":
        return u, np.asarray(flux_fn(u, fixed), dtype=float)
    raise ValueError("axis must be 'left' or 'right'")


def consistency_error(flux_fn, model, n: int = 200) -> float:
    """max |F(u, u) - f(u)| over a uniform sweep of [0, u_max]."""
    u = np.linspace(0.0, model.u_max, n)
    return float(np.max(np.abs(np.asarray(flux_fn(u, u)) - model._f(u))))


def is_monotone_flux(flux_fn, u_max: float = 1.0, n: int = 200, tol: float = 1e-12) -> bool:
    u = np.linspace(0.0, u_max, n)
    ul, ur = np.meshgrid(u, u, indexing="ij")
    F = np.asarray(flux_fn(ul, ur), dtype=float)
    return bool(np.all(np.diff(F, axis=0) >= -tol) and np.all(np.diff(F, axis=1) <= tol))


def write_curve_csv(path, u, values, header=("u", "flux")) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for a, b in zip(u, values):
            w.writerow([f"{a:.17g}", f"{b:.17g}"])


# ----------------------------------------------------------------------
# heatmaps


def write_pgm(path, grid: SolutionGrid, u_max: float = 1.0) -> None:
    """8-bit binary PGM (time down, space across) with a linear [0, u_max] gray map,
    plus a sidecar JSON describing the axes."""
    v = np.clip(grid.values / u_max, 0.0, 1.0)
    img = np.round(255 * v).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(img.tobytes())
    side = {
        "x_origin": grid.disc.x_origin,
        "dx": grid.disc.dx,
        "dt": grid.disc.dt,
        "n_cells": grid.disc.n_cells,
        "n_steps": grid.disc.n_steps,
        "gray_range": [0.0, u_max],
        "rows": "time (first row t=0)",
        "columns": "space (left to right)",
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(side, fh, indent=2)


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


# ----------------------------------------------------------------------
# report


@dataclass
class MetricsReport:
    per_scheme: dict[str, dict[str, list[float]]] = field(default_factory=dict)
    per_ic: dict[str, dict[str, list[float]]] = field(default_factory=dict)
    winrates: WinrateTable | None = None
    convergence: ConvergenceTable | None = None
    dtw: dict[str, list[float]] | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_errors(cls, per_ic: dict[str, dict[str, list[float]]], winrate_metric: str = "l2", meta=None) -> MetricsReport:
        summary = {
            name: {m: [float(np.mean(v)), float(np.std(v))] for m, v in metrics.items()}
            for name, metrics in per_ic.items()
        }
        table = winrate_matrix({k: np.array(v[winrate_metric]) for k, v in per_ic.items()}) if per_ic else None
        return cls(summary, per_ic, table, meta=meta or {})

    def to_dict(self) -> dict:
        return {
            "per_scheme": self.per_scheme,
            "per_ic": self.per_ic,
            "winrates": self.winrates.to_dict() if self.winrates else None,
            "convergence": self.convergence.to_dict() if self.convergence else None,
            "dtw": self.dtw,
            "meta": self.meta,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def to_csv(self, prefix) -> list[str]:
        """Flat CSV tables: <prefix>_errors.csv, <prefix>_winrates.csv, <prefix>_convergence.csv."""
        paths = []
        p = f"{prefix}_errors.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scheme", "metric", "mean", "std"])
            for name, metrics in self.per_scheme.items():
                for m, (mu, sd) in metrics.items():
                    w.writerow([name, m, f"{mu:.6e}", f"{sd:.6e}"])
        paths.append(p)
        if self.winrates is not None:
            p = f"{prefix}_winrates.csv"
            t = self.winrates
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["row", "col", "rate", "wins", "ties", "n", "wilson_lower", "wilson_upper"])
                for i, a in enumerate(t.names):
                    for j, b in enumerate(t.names):
                        if i != j:
                            w.writerow([a, b, f"{t.rate[i, j]:.6f}", t.wins[i, j], t.ties[i, j], t.n,
                                        f"{t.lower[i, j]:.6f}", f"{t.upper[i, j]:.6f}"])
            paths.append(p)
        if self.convergence is not None:
            p = f"{prefix}_convergence.csv"
            c = self.convergence
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["dx", "dt", f"mean_{c.metric}", "std"])
                for row in zip(c.dx, c.dt, c.mean, c.std):
                    w.writerow([f"{x:.6e}" for x in row])
            paths.append(p)
        return paths
