"""Fitting flux-model parameters to measured data with differential evolution.

Two objectives are available: the mean squared error of an autoregressive
finite-volume rollout against a measured density grid, and the mean squared
error between measured (density, flow) points and the model's flow curve.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from conslaw.flux import FluxModel
from conslaw.grid import BoundaryTrace, SolutionGrid
from conslaw.schemes import NumericalFluxSpec, fv_rollout

# physical bounds per family; prediction mode follows the documented traffic ranges,
# FD mode only constrains signs (the wide upper limits exist because DE needs a box)
PREDICTION_BOUNDS = {
    "greenshields": {"v_max": (60.0, 150.0), "rho_max": (50.0, 300.0)},
    "triangular_sym": {"v_max": (60.0, 150.0), "w": (-70.0, -10.0), "rho_max": (50.0, 300.0)},
    "triangular_skw": {"v_max": (60.0, 150.0), "w": (-70.0, -10.0), "rho_max": (50.0, 300.0)},
    "greenberg": {"c0": (5.0, 100.0), "rho_max": (50.0, 300.0)},
    "underwood": {"c1": (5.0, 200.0), "c2": (0.001, 0.1), "rho_cap": (50.0, 300.0)},
}
FD_BOUNDS = {
    "greenshields": {"v_max": (1e-6, 500.0), "rho_max": (1e-6, 1000.0)},
    "triangular_sym": {"v_max": (1e-6, 500.0), "w": (-500.0, -1e-6), "rho_max": (1e-6, 1000.0)},
    "triangular_skw": {"v_max": (1e-6, 500.0), "w": (-500.0, -1e-6), "rho_max": (1e-6, 1000.0)},
    "greenberg": {"c0": (1e-6, 500.0), "rho_max": (1e-6, 1000.0)},
    "underwood": {"c1": (1e-6, 1000.0), "c2": (1e-6, 1.0), "rho_cap": (1e-6, 1000.0)},
}


_NONNEGATIVE = {"v_max", "rho_max", "rho_c1", "rho_c2", "rho_cap", "c0", "c1", "c2", "u_max"}


@dataclass(frozen=True)
class ParamBounds:
    names: tuple[str, ...]
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.names) == len(self.lo) == len(self.hi)) or not self.names:
            raise ValueError("bounds need one (lo, hi) pair per parameter")
        for n, a, b in zip(self.names, self.lo, self.hi):
            if not a < b:
                raise ValueError(f"bounds for {n}: need lo < hi")
            if n == "w" and b > 0:
                raise ValueError("bounds for w must be negative")
            if n in _NONNEGATIVE and a < 0:
                raise ValueError(f"bounds for {n} must be nonnegative")

    @classmethod
    def from_dict(cls, d: dict) -> ParamBounds:
        names = tuple(d)
        return cls(names, tuple(float(d[n][0]) for n in names), tuple(float(d[n][1]) for n in names))

    @classmethod
    def default(cls, family: str, mode: str) -> ParamBounds:
        table = PREDICTION_BOUNDS if mode == "prediction" else FD_BOUNDS
        if family not in table:
            raise ValueError(f"no default calibration bounds for {family!r}; pass bounds explicitly")
        return cls.from_dict(table[family])

    def to_dict(self) -> dict:
        return {n: [a, b] for n, a, b in zip(self.names, self.lo, self.hi)}

    @property
    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.lo), np.array(self.hi)


@dataclass(frozen=True)
class Units:
    """Factors converting physical parameters to the solver's units (multiplicative)."""

    density: float = 1.0
    speed: float = 1.0
    density_label: str = "veh/km/lane"
    flow_label: str = "veh/h/lane"

    def to_solver(self, params: dict[str, float]) -> dict[str, float]:
        out = {}
        for k, v in params.items():
            if k in ("rho_max", "rho_cap", "rho_c1", "rho_c2"):
                out[k] = v * self.density
            elif k in ("v_max", "w", "c0", "c1"):
                out[k] = v * self.speed
            elif k == "c2":
                out[k] = v / self.density
            else:
                out[k] = v
        return out


# ----------------------------------------------------------------------
# fundamental diagram


@dataclass
class FDSamples:
    density: np.ndarray
    flow: np.ndarray
    density_unit: str = "veh/km/lane"
    flow_unit: str = "veh/h/lane"

    def __post_init__(self):
        self.density = np.asarray(self.density, dtype=float).ravel()
        self.flow = np.asarray(self.flow, dtype=float).ravel()
        if self.density.shape != self.flow.shape:
            raise ValueError("density and flow must have equal length")
        if self.density.size == 0:
            raise ValueError("fundamental diagram is empty")
        if np.any(self.density < 0) or np.any(self.flow < 0):
            raise ValueError("densities and flows must be nonnegative")

    def __len__(self) -> int:
        return self.density.size

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# density={self.density_unit} flow={self.flow_unit}\n")
            w = csv.writer(fh)
            for k, q in zip(self.density, self.flow):
                w.writerow([f"{k:.17g}", f"{q:.17g}"])

    @classmethod
    def from_csv(cls, path) -> FDSamples:
        with open(path) as fh:
            first = fh.readline()
            units = {}
            if first.startswith("#"):
                units = dict(t.partition("=")[::2] for t in first[1:].split())
                rows = list(csv.reader(fh))
            else:
                rows = [first.strip().split(",")] + list(csv.reader(fh))
        data = []
        for r in rows:
            if not r or not r[0].strip():
                continue
            try:
                data.append((float(r[0]), float(r[1])))
            except ValueError:
                continue  # column header
        arr = np.array(data).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1], units.get("density", "veh/km/lane"), units.get("flow", "veh/h/lane"))


def build_fundamental_diagram(
    trajectories,
    window_length: float,
    count_interval: float,
    centers=None,
    t_range: tuple[float, float] | None = None,
    samples_per_interval: int = 50,
) -> FDSamples:
    """(density, flow) estimates from vehicle trajectories.

    Each trajectory is a pair (times, positions). For every window center and
    every counting interval, density is the time-averaged number of vehicles in
    the window divided by its length, and flow is the number of forward
    crossings of the window's midpoint divided by the interval. Passing an
    (N, 2) array of precomputed pairs skips the construction.
    """
    if isinstance(trajectories, np.ndarray) and trajectories.ndim == 2 and trajectories.shape[1] == 2:
        return FDSamples(trajectories[:, 0], trajectories[:, 1])
    trajs = [(np.asarray(t, float), np.asarray(x, float)) for t, x in trajectories]
    if not trajs:
        raise ValueError("no trajectories given")
    if window_length <= 0 or count_interval <= 0:
        raise ValueError("window_length and count_interval must be positive")
    t_lo = min(t[0] for t, _ in trajs) if t_range is None else t_range[0]
    t_hi = max(t[-1] for t, _ in trajs) if t_range is None else t_range[1]
    if centers is None:
        x_lo = min(x.min() for _, x in trajs)
        x_hi = max(x.max() for _, x in trajs)
        centers = [0.5 * (x_lo + x_hi)]
    n_int = int(math.floor((t_hi - t_lo) / count_interval + 1e-9))
    if n_int < 1:
        raise ValueError("time range shorter than one counting interval")
    dens, flows = [], []
    half = 0.5 * window_length
    for c in centers:
        for k in range(n_int):
            a = t_lo + k * count_interval
            b = a + count_interval
            ts = a + (np.arange(samples_per_interval) + 0.5) * count_interval / samples_per_interval
            inside = np.zeros(samples_per_interval)
            crossings = 0
            for t, x in trajs:
                live = (ts >= t[0]) & (ts <= t[-1])
                pos = np.interp(ts, t, x)
                inside += live & (pos >= c - half) & (pos < c + half)
                # forward crossings of the midpoint during [a, b)
                seg = (t[:-1] < b) & (t[1:] >= a)
                x0, x1 = x[:-1][seg], x[1:][seg]
                t0, t1 = t[:-1][seg], t[1:][seg]
                cross = (x0 < c) & (x1 >= c)
                if np.any(cross):
                    tc = t0[cross] + (c - x0[cross]) / (x1[cross] - x0[cross]) * (t1[cross] - t0[cross])
                    crossings += int(np.sum((tc >= a) & (tc < b)))
            dens.append(inside.mean() / window_length)
            flows.append(crossings / count_interval)
    return FDSamples(np.array(dens), np.array(flows))


# ----------------------------------------------------------------------
# objectives


def _model(params, family: str, names=None, units: Units | None = None) -> FluxModel | None:
    p = dict(zip(names, params)) if names is not None else dict(params)
    if units is not None:
        p = units.to_solver(p)
    try:
        return FluxModel(family, p)
    except ValueError:
        return None


def fd_mse_objective(params, family: str, fd: FDSamples, names=None) -> float:
    """Mean of (q - max(f(k), 0))^2; invalid parameters give +inf."""
    model = _model(params, family, names)
    if model is None:
        return math.inf
    with np.errstate(all="ignore"):
        fk = model._f(np.maximum(fd.density, 0.0))
    fk = np.where(np.isfinite(fk), fk, 0.0)
    return float(np.mean((fd.flow - np.maximum(fk, 0.0)) ** 2))


def prediction_mse_objective(
    params,
    family: str,
    observed: SolutionGrid,
    scheme: str = "godunov",
    trace: BoundaryTrace | None = None,
    names=None,
    units: Units | None = None,
    lxf_speed_mode: str = "sup",
) -> float:
    """Mean squared density error of a rollout from the observed first row.

    Without an explicit ``trace`` the observed edge cells act as ghost values.
    Invalid parameters, densities above the model's cap and CFL violations give +inf.
    """
    model = _model(params, family, names, units)
    if model is None:
        return math.inf
    if np.max(observed.values) > model.u_max * (1 + 1e-12) or np.min(observed.values) < 0:
        return math.inf
    tr = BoundaryTrace.from_edges(observed) if trace is None else trace
    try:
        spec = NumericalFluxSpec(scheme, model, lxf_speed_mode)
        pred = fv_rollout(observed.values[0], spec, tr, observed.disc).grid.values
    except ValueError:
        return math.inf
    err = np.mean((pred - observed.values) ** 2)
    return float(err) if np.isfinite(err) else math.inf


# ----------------------------------------------------------------------
# differential evolution


@dataclass
class DEConfig:
    pop_factor: int = 15
    F: float = 0.8
    CR: float = 0.9
    max_gens: int = 1000
    seed: int = 0
    tol: float = 1e-12
    xtol: float = 1e-8


@dataclass
class DEResult:
    x: np.ndarray
    fun: float
    generations: int
    evaluations: int
    history: list[float] = field(default_factory=list)


def differential_evolution(objective, bounds: ParamBounds, config: DEConfig = DEConfig()) -> DEResult:
    """rand/1/bin DE with mutants clipped into the bounds; deterministic under seed.

    Stops after ``max_gens`` generations or once the population's objective
    spread (max - min over finite values) falls below ``tol`` while its members
    also agree to ``xtol`` as a fraction of each bound width. The position test
    keeps flat plateaus (e.g. a flow curve clamped to zero everywhere) from
    ending the search.
    """
    lo, hi = bounds.arrays
    dim = lo.size
    npop = max(config.pop_factor * dim, 4)
    rng = np.random.default_rng(config.seed)
    pop = lo + rng.uniform(size=(npop, dim)) * (hi - lo)
    vals = np.array([objective(x) for x in pop], dtype=float)
    evals = npop
    best = int(np.argmin(vals))
    history = [float(vals[best])]
    gen = 0
    while gen < config.max_gens:
        finite = vals[np.isfinite(vals)]
        if finite.size == npop and finite.max() - finite.min() < config.tol:
            if np.max(np.ptp(pop, axis=0) / (hi - lo)) < config.xtol:
                break
        gen += 1
        for i in range(npop):
            choices = rng.choice(npop - 1, 3, replace=False)
            r1, r2, r3 = np.where(choices >= i, choices + 1, choices)
            mutant = np.clip(pop[r1] + config.F * (pop[r2] - pop[r3]), lo, hi)
            cross = rng.uniform(size=dim) < config.CR
            cross[rng.integers(dim)] = True
            trial = np.where(cross, mutant, pop[i])
            val = float(objective(trial))
            evals += 1
            if val <= vals[i] or (math.isnan(vals[i]) and not math.isnan(val)):
                pop[i] = trial
                vals[i] = val
        best = int(np.nanargmin(np.where(np.isnan(vals), np.inf, vals))) if np.any(np.isfinite(vals)) else 0
        history.append(float(vals[best]))
    return DEResult(pop[best].copy(), float(vals[best]), gen, evals, history)


# ----------------------------------------------------------------------
# calibration driver


@dataclass
class CalibrationData:
    fd: FDSamples | None = None
    grid: SolutionGrid | None = None
    trace: BoundaryTrace | None = None


@dataclass
class CalibrationReport:
    family: str
    mode: str
    params: dict[str, float]
    fd_mse: float | None
    prediction_mse: float | None
    generations: int
    evaluations: int
    seed: int
    bounds: dict
    scheme: str | None = None
    units: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("fd_mse", "prediction_mse"):
            if d[k] is not None and not math.isfinite(d[k]):
                d[k] = None
        return d

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def calibrate(
    family: str,
    mode: str,
    data: CalibrationData,
    bounds: ParamBounds | None = None,
    de_config: DEConfig = DEConfig(),
    scheme: str = "godunov",
    units: Units = Units(),
) -> tuple[FluxModel, CalibrationReport]:
    """Fit ``family`` by minimizing the chosen objective; the report carries both
    objectives for the fitted parameters whenever the corresponding data exist."""
    if mode not in ("prediction", "fd"):
        raise ValueError("mode must be 'prediction' or 'fd'")
    bounds = ParamBounds.default(family, mode) if bounds is None else bounds
    names = bounds.names

    def fd_obj(x):
        return fd_mse_objective(x, family, data.fd, names)

    def pred_obj(x):
        return prediction_mse_objective(x, family, data.grid, scheme, data.trace, names, units)

    if mode == "fd":
        if data.fd is None:
            raise ValueError("FD calibration needs fundamental-diagram samples")
        res = differential_evolution(fd_obj, bounds, de_config)
    else:
        if data.grid is None:
            raise ValueError("prediction calibration needs a measured grid")
        res = differential_evolution(pred_obj, bounds, de_config)
    params = {n: float(v) for n, v in zip(names, res.x)}
    report = CalibrationReport(
        family=family,
        mode=mode,
        params=params,
        fd_mse=fd_obj(res.x) if data.fd is not None else None,
        prediction_mse=pred_obj(res.x) if data.grid is not None else None,
        generations=res.generations,
        evaluations=res.evaluations,
        seed=de_config.seed,
        bounds=bounds.to_dict(),
        scheme=scheme if mode == "prediction" else None,
        units={"density": units.density_label, "flow": units.flow_label,
               "fd_mse": f"({units.flow_label})^2", "prediction_mse": f"({units.density_label})^2"},
    )
    return FluxModel(family, units.to_solver(params) if mode == "prediction" else params), report
