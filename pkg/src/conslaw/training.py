"""Datasets, supervised and weak-form losses, Adam, and the curriculum loop."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from conslaw.exact import PiecewiseConstantIC, exact_grid
from conslaw.flux import FluxModel
from conslaw.grid import BoundaryTrace, Discretization, SolutionGrid
from conslaw.nn import FluxNetwork, nfvm_rollout_batch, rollout_backward, save_weights

TRAIN_DISC = Discretization(dx=1e-3, dt=1e-4, n_cells=100, n_steps=250)
EVAL_DISC = Discretization(dx=5e-3, dt=5e-4, n_cells=200, n_steps=1000)
CURRICULUM = ((10, 1e-4), (50, 1e-5), (100, 1e-6), (250, 1e-7))


class TrainingDivergedError(RuntimeError):
    pass


class NonFiniteGradientError(FloatingPointError):
    pass


def critical_point(model: FluxModel) -> float:
    """Density where f' changes sign (the sonic point 0 for Burgers)."""
    return 0.0 if model.is_convex else float(model.rho_c)


# ----------------------------------------------------------------------
# datasets


@dataclass
class RiemannSample:
    rho_left: float
    rho_right: float
    x0: float
    disc: Discretization
    exact: SolutionGrid
    trace: BoundaryTrace


@dataclass
class RiemannDataset:
    """Stacked Riemann problems; arrays are indexed by sample first."""

    disc: Discretization
    rho_left: np.ndarray
    rho_right: np.ndarray
    x0: np.ndarray
    exact: np.ndarray  # (S, n_steps + 1, n_cells)
    ghosts_left: np.ndarray  # (S, n_steps, width)
    ghosts_right: np.ndarray

    def __len__(self) -> int:
        return len(self.rho_left)

    def __getitem__(self, i: int) -> RiemannSample:
        return RiemannSample(
            float(self.rho_left[i]),
            float(self.rho_right[i]),
            float(self.x0[i]),
            self.disc,
            SolutionGrid(self.disc, self.exact[i]),
            BoundaryTrace(self.ghosts_left[i], self.ghosts_right[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def _truncated_normal(rng, mean, sd, lo, hi, size):
    out = rng.normal(mean, sd, size)
    bad = (out < lo) | (out > hi)
    while np.any(bad):
        out[bad] = rng.normal(mean, sd, int(bad.sum()))
        bad = (out < lo) | (out > hi)
    return out


def generate_riemann_dataset(
    model: FluxModel,
    count: int,
    disc: Discretization = TRAIN_DISC,
    seed: int = 0,
    oversample_critical: float = 0.0,
    ghost_width: int = 3,
) -> RiemannDataset:
    """Random Riemann problems with exact cell averages and ghost traces.

    States are uniform on [0, u_max]^2 (nearly equal pairs redrawn); a fraction
    ``oversample_critical`` draws both states near the critical density instead.
    The jump sits at the domain center plus a small Gaussian jitter.
    """
    if not 0.0 <= oversample_critical <= 1.0:
        raise ValueError("oversample_critical must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    um = model.u_max
    n_crit = int(round(oversample_critical * count))
    states = np.empty((count, 2))
    for i in range(count):
        while True:
            if i < n_crit:
                pair = _truncated_normal(rng, critical_point(model), 0.05 * um, 0.0, um, 2)
            else:
                pair = rng.uniform(0.0, um, 2)
            if abs(pair[0] - pair[1]) >= 1e-6:
                break
        states[i] = pair
    order = rng.permutation(count)
    states = states[order]
    center = disc.x_origin + 0.5 * disc.length
    jitter = _truncated_normal(rng, 0.0, disc.dx, -5 * disc.dx, 5 * disc.dx, count) if count else np.empty(0)
    x0 = center + jitter
    exact = np.empty((count, disc.n_steps + 1, disc.n_cells))
    gl = np.empty((count, disc.n_steps, ghost_width))
    gr = np.empty((count, disc.n_steps, ghost_width))
    for i in range(count):
        ic = PiecewiseConstantIC.riemann(states[i, 0], states[i, 1], x0[i], disc.x_origin, disc.x_right)
        grid, trace = exact_grid(model, ic, disc, ghost_width=ghost_width)
        exact[i] = grid.values
        gl[i] = trace.left
        gr[i] = trace.right
    return RiemannDataset(disc, states[:, 0], states[:, 1], x0, exact, gl, gr)


@dataclass
class EvalCase:
    ic: PiecewiseConstantIC
    exact: SolutionGrid
    trace: BoundaryTrace


def random_piecewise_ic(
    model: FluxModel, rng: np.random.Generator, n_pieces: int, left: float, right: float, breakpoints: str = "uniform"
) -> PiecewiseConstantIC:
    """``n_pieces`` i.i.d. uniform values on [left, right]; breakpoints evenly spaced or random."""
    if n_pieces < 2:
        raise ValueError("n_pieces must be >= 2")
    if breakpoints == "uniform":
        bp = np.linspace(left, right, n_pieces + 1)
    elif breakpoints == "random":
        bp = np.concatenate([[left], np.sort(rng.uniform(left, right, n_pieces - 1)), [right]])
    else:
        raise ValueError("breakpoints must be 'uniform' or 'random'")
    values = rng.uniform(0.0, model.u_max, n_pieces)
    return PiecewiseConstantIC(tuple(bp), tuple(values))


def iter_eval_cases(
    model: FluxModel,
    count: int,
    n_pieces: int = 10,
    disc: Discretization = EVAL_DISC,
    seed: int = 0,
    breakpoints: str = "uniform",
):
    """Lazily yield evaluation cases; the exact solution is computed on a domain
    extended by the fastest waves (outer pieces continue with their edge values)
    and then cropped to the window."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        ic = random_piecewise_ic(model, rng, n_pieces, disc.x_origin, disc.x_right, breakpoints)
        grid, trace = exact_grid(model, ic, disc)
        yield EvalCase(ic, grid, trace)


def generate_eval_dataset(model, count, n_pieces=10, disc=EVAL_DISC, seed=0, breakpoints="uniform") -> list[EvalCase]:
    return list(iter_eval_cases(model, count, n_pieces, disc, seed, breakpoints))


# ----------------------------------------------------------------------
# supervised loss


def _values(g):
    return g.values if isinstance(g, SolutionGrid) else np.asarray(g, dtype=float)


def supervised_loss(predicted, exact) -> tuple[float, np.ndarray]:
    """Mean |predicted - exact| over the predicted rows (1..n_T) and all samples.

    This is the space-time L1 norm divided by the area of the window. Returns the
    loss and its subgradient with respect to ``predicted`` (row 0 gets zero).
    """
    p = _values(predicted)
    e = _values(exact)
    if p.shape != e.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {e.shape}")
    if p.shape[-2] < 2:
        return 0.0, np.zeros_like(p)
    diff = p[..., 1:, :] - e[..., 1:, :]
    n = diff.size
    grad = np.zeros_like(p)
    grad[..., 1:, :] = np.sign(diff) / n
    return float(np.abs(diff).sum() / n), grad


# ----------------------------------------------------------------------
# test functions


def _psi(s):
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) <= 1, np.cos(0.5 * np.pi * s) ** 2, 0.0)


def _dpsi(s):
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) <= 1, -0.5 * np.pi * np.sin(np.pi * s), 0.0)


@dataclass(frozen=True)
class TestFunction:
    """phi(t, x) = A psi((t - t0)/sigma_t) psi((x - x0)/sigma_x), psi(s) = cos^2(pi s / 2) on |s| <= 1.

    ``t0 == 0`` is the initial-term case: only the upper half in time lies in
    the domain and phi(0, .) does not vanish.
    """

    __test__ = False  # not a pytest class

    t0: float
    x0: float
    sigma_t: float
    sigma_x: float
    amplitude: float

    @property
    def initial(self) -> bool:
        return self.t0 == 0.0

    def __call__(self, t, x):
        return self.amplitude * _psi((t - self.t0) / self.sigma_t) * _psi((x - self.x0) / self.sigma_x)

    def d_t(self, t, x):
        return self.amplitude / self.sigma_t * _dpsi((t - self.t0) / self.sigma_t) * _psi((x - self.x0) / self.sigma_x)

    def d_x(self, t, x):
        return self.amplitude / self.sigma_x * _psi((t - self.t0) / self.sigma_t) * _dpsi((x - self.x0) / self.sigma_x)

    def norm_parts(self) -> dict[str, float]:
        """Closed-form pieces of the test-function norm over t >= 0."""
        A, st, sx = abs(self.amplitude), self.sigma_t, self.sigma_x
        half = 0.5 if self.initial else 1.0
        return {
            "l1": A * st * half * sx,
            "l1_dt": A * 2 * half * sx,
            "l1_dx": A * st * half * 2,
            "sup": A,
            "sup_dt": A * 0.5 * np.pi / st,
            "sup_dx": A * 0.5 * np.pi / sx,
            "initial_l1": A * sx if self.initial else 0.0,
        }

    def norm(self) -> float:
        return float(sum(self.norm_parts().values()))

    def support(self) -> tuple[float, float, float, float]:
        return (max(self.t0 - self.sigma_t, 0.0), self.t0 + self.sigma_t, self.x0 - self.sigma_x, self.x0 + self.sigma_x)


def sample_test_functions(
    R: float,
    count: int,
    domain: tuple[float, float],
    T: float,
    seed=0,
    initial_fraction: float = 0.25,
    width_range: tuple[float, float] = (0.05, 0.25),
) -> list[TestFunction]:
    """Random bumps inside (0, T) x domain, rescaled to norm R*U with U ~ Uniform(0.5, 1).

    Half-widths are uniform fractions ``width_range`` of the window sizes; about
    ``initial_fraction`` of the bumps sit on t = 0.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    a, b = domain
    L = b - a
    out = []
    for _ in range(count):
        sx = rng.uniform(*width_range) * L
        st = rng.uniform(*width_range) * T
        x0 = rng.uniform(a + sx, b - sx)
        t0 = 0.0 if rng.uniform() < initial_fraction else rng.uniform(st, T - st)
        unit = TestFunction(t0, x0, st, sx, 1.0)
        amp = R * rng.uniform(0.5, 1.0) / unit.norm()
        out.append(TestFunction(t0, x0, st, sx, amp))
    return out


def _phi_tables(phis, disc: Discretization, n_rows: int):
    """d_t phi and d_x phi at space-time cell centers, plus phi(0, x_j); shapes (K, n_rows, N), (K, N)."""
    tc = disc.dt * (np.arange(n_rows) + 0.5)
    xc = disc.centers
    K = len(phis)
    pt = np.empty((K, n_rows, disc.n_cells))
    px = np.empty_like(pt)
    p0 = np.empty((K, disc.n_cells))
    T, X = tc[:, None], xc[None, :]
    for k, phi in enumerate(phis):
        pt[k] = phi.d_t(T, X)
        px[k] = phi.d_x(T, X)
        p0[k] = phi(0.0, xc)
    return pt, px, p0


def _check_support(phi: TestFunction, disc: Discretization, T: float) -> None:
    t_lo, t_hi, x_lo, x_hi = phi.support()
    tol = 1e-12 * max(1.0, abs(disc.x_origin), abs(disc.x_right))
    if x_lo < disc.x_origin - tol or x_hi > disc.x_right + tol or t_hi > T * (1 + 1e-12):
        raise ValueError("test-function support escapes the space-time window")


def weak_residual(grid: SolutionGrid, model: FluxModel, ic_field, phi: TestFunction) -> float:
    """Midpoint quadrature of the weak form on the grid's own cells.

    sum_{n,j} [u phi_t + f(u) phi_x](t_n + dt/2, x_j) dx dt + sum_j u0_j phi(0, x_j) dx,
    using rows 0..n_steps-1 (the piecewise-constant solution on [0, T)).
    """
    disc = grid.disc
    T = disc.t_final
    _check_support(phi, disc, T)
    n = disc.n_steps
    pt, px, p0 = _phi_tables([phi], disc, n)
    u = grid.values[:n]
    fu = model._f(np.clip(u, 0.0, model.u_max))
    body = np.sum(u * pt[0] + fu * px[0]) * disc.dx * disc.dt
    init = np.dot(np.asarray(ic_field, dtype=float), p0[0]) * disc.dx
    return float(body + init)


def weak_residuals_batch(values, model: FluxModel, disc: Discretization, phis, tables=None):
    """Residuals r[b, k] for rollouts ``values`` (B, n_T + 1, N) and the gradient map.

    Returns (r, dr_du) with dr_du of shape (B, K, n_T + 1, N) omitted for memory;
    instead returns the tables needed by ``unsupervised_loss``.
    """
    v = np.asarray(values, dtype=float)
    n = v.shape[1] - 1
    pt, px, p0 = tables if tables is not None else _phi_tables(phis, disc, n)
    u = v[:, :n]
    fu = model._f(np.clip(u, 0.0, model.u_max))
    body = (np.einsum("btn,ktn->bk", u, pt) + np.einsum("btn,ktn->bk", fu, px)) * disc.dx * disc.dt
    init = np.einsum("bn,kn->bk", v[:, 0], p0) * disc.dx
    return body + init, (pt, px, p0)


def unsupervised_values_loss(values, model: FluxModel, disc: Discretization, phis):
    """Mean squared weak residual over samples and test functions, with d/d(values)."""
    v = np.asarray(values, dtype=float)
    B, n1, N = v.shape
    n = n1 - 1
    if not phis or n == 0:
        return 0.0, np.zeros_like(v)
    r, (pt, px, p0) = weak_residuals_batch(v, model, disc, phis)
    K = r.shape[1]
    loss = float(np.mean(r**2))
    coef = 2.0 * r / (B * K)  # (B, K)
    u = v[:, :n]
    inside = (u >= 0.0) & (u <= model.u_max)
    dfu = np.where(inside, model._df(np.clip(u, 0.0, model.u_max)), 0.0)
    grad = np.zeros_like(v)
    grad[:, :n] = (np.einsum("bk,ktn->btn", coef, pt) + dfu * np.einsum("bk,ktn->btn", coef, px)) * disc.dx * disc.dt
    grad[:, 0] += np.einsum("bk,kn->bn", coef, p0) * disc.dx
    return loss, grad


def unsupervised_loss(net: FluxNetwork, u0, ghosts_left, ghosts_right, model: FluxModel, disc: Discretization, phis, clip=True):
    """Roll ``net`` out over ``disc.n_steps`` and return (loss, parameter gradients)."""
    vals, tape = nfvm_rollout_batch(u0, net, ghosts_left, ghosts_right, disc.cfl_ratio, disc.n_steps, clip, record=True)
    loss, g = unsupervised_values_loss(vals, model, disc, phis)
    return loss, rollout_backward(net, tape, g)


def flux_unsupervised_loss(flux_fn, u0, ghosts_left, ghosts_right, model, disc, phis):
    """Unsupervised loss of an arbitrary two-point flux (e.g. Lax-Friedrichs) for comparison."""
    u = np.atleast_2d(np.asarray(u0, dtype=float))
    B, N = u.shape
    vals = np.empty((B, disc.n_steps + 1, N))
    vals[:, 0] = u
    gl = np.asarray(ghosts_left)
    gr = np.asarray(ghosts_right)
    for n in range(disc.n_steps):
        p = np.concatenate([gl[:, n, -1:], vals[:, n], gr[:, n, :1]], axis=1)
        F = flux_fn(p[:, :-1], p[:, 1:])
        vals[:, n + 1] = vals[:, n] + disc.cfl_ratio * (F[:, :-1] - F[:, 1:])
    return unsupervised_values_loss(vals, model, disc, phis)[0]


# ----------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    step: int
    m: list[np.ndarray]
    v: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params) -> AdamState:
        return cls(0, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])

    def to_dict(self) -> dict:
        return {"step": self.step, "m": [x.tolist() for x in self.m], "v": [x.tolist() for x in self.v]}

    @classmethod
    def from_dict(cls, doc) -> AdamState:
        return cls(int(doc["step"]), [np.array(x) for x in doc["m"]], [np.array(x) for x in doc["v"]])


def adam_step(params, grads, state: AdamState, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam; returns (new_params, new_state). Non-finite gradients raise."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError("non-finite gradient")
    t = state.step + 1
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        new_p.append(p - lr * mhat / (np.sqrt(vhat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(t, new_m, new_v)


# ----------------------------------------------------------------------
# training loop


@dataclass
class Stage:
    n_T: int
    lr: float
    steps: int


@dataclass
class TrainingConfig:
    stages: list[Stage] = field(default_factory=lambda: [Stage(n, lr, 500) for n, lr in CURRICULUM])
    batch_size: int = 256
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss_kind: str = "supervised"
    R: float = 10.0
    n_test_functions: int = 32
    oversample_critical: float = 0.0
    loss_scale: float | None = None
    max_restarts: int = 3
    clip: bool = True

    def __post_init__(self):
        self.stages = [s if isinstance(s, Stage) else Stage(**s) for s in self.stages]
        if self.loss_kind not in ("supervised", "unsupervised"):
            raise ValueError("loss_kind must be 'supervised' or 'unsupervised'")
        lrs = [s.lr for s in self.stages]
        if any(lr <= 0 for lr in lrs) or any(b > a for a, b in zip(lrs, lrs[1:])):
            raise ValueError("learning rates must be positive and nonincreasing across stages")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> TrainingConfig:
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown training config fields: {sorted(extra)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> TrainingConfig:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class TrainResult:
    net: FluxNetwork
    history: list[tuple[int, int, int, float]]
    restarts: int
    adam: AdamState
    loss_scale: float = 1.0

    def write_history(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "stage", "n_T", "loss"])
            for row in self.history:
                w.writerow([row[0], row[1], row[2], f"{row[3]:.17g}"])


def batch_loss_and_grads(net, dataset: RiemannDataset, idx, n_T: int, config: TrainingConfig, model, rng, scale=1.0):
    u0 = dataset.exact[idx, 0]
    gl = dataset.ghosts_left[idx, :n_T]
    gr = dataset.ghosts_right[idx, :n_T]
    lam = dataset.disc.cfl_ratio
    vals, tape = nfvm_rollout_batch(u0, net, gl, gr, lam, n_T, config.clip, record=True)
    if config.loss_kind == "supervised":
        loss, g = supervised_loss(vals, dataset.exact[idx, : n_T + 1])
    else:
        d = dataset.disc.with_steps(n_T)
        phis = sample_test_functions(config.R, config.n_test_functions, (d.x_origin, d.x_right), d.t_final, rng)
        loss, g = unsupervised_values_loss(vals, model, d, phis)
    grads = rollout_backward(net, tape, g * scale)
    return loss * scale, grads


def train(
    net: FluxNetwork,
    dataset: RiemannDataset,
    config: TrainingConfig,
    model: FluxModel | None = None,
    checkpoint_dir=None,
    progress=None,
) -> TrainResult:
    """Curriculum training; restarts from a reseeded initialization when the loss
    becomes non-finite, at most ``config.max_restarts`` times."""
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    if config.loss_kind == "unsupervised" and model is None:
        raise ValueError("unsupervised training needs the flux model")
    longest = max((s.n_T for s in config.stages if s.steps > 0), default=0)
    if longest > dataset.disc.n_steps:
        raise ValueError(f"dataset has {dataset.disc.n_steps} steps, curriculum needs {longest}")
    initial = net.copy()
    for attempt in range(config.max_restarts + 1):
        start = initial if attempt == 0 else _reseeded(initial, config.seed + 7919 * attempt)
        try:
            return _train_once(start.copy(), dataset, config, model, checkpoint_dir, progress, attempt)
        except (NonFiniteGradientError, FloatingPointError):
            continue
    raise TrainingDivergedError(f"training diverged after {config.max_restarts} restarts")


def _reseeded(net: FluxNetwork, seed: int) -> FluxNetwork:
    fresh = FluxNetwork.initialized(
        net.stencil_a, net.stencil_b, net.hidden_width, net.n_layers, net.activation,
        clip_bound=net.clip_bound, seed=seed,
    )
    fresh.u_max = net.u_max
    return fresh


def _train_once(net, dataset, config, model, checkpoint_dir, progress, attempt) -> TrainResult:
    rng = np.random.default_rng([config.seed, attempt])
    state = AdamState.zeros_like(net.params())
    history = []
    step = 0
    scale = config.loss_scale
    S = len(dataset)
    bs = min(config.batch_size, S)
    for k, stage in enumerate(config.stages):
        for _ in range(stage.steps):
            idx = np.sort(rng.choice(S, size=bs, replace=False))
            if scale is None:
                raw, _ = batch_loss_and_grads(net, dataset, idx, stage.n_T, config, model, np.random.default_rng([config.seed, 99]))
                scale = 1.0 if config.loss_kind == "supervised" or raw <= 0 else 1.0 / raw
            loss, grads = batch_loss_and_grads(net, dataset, idx, stage.n_T, config, model, rng, scale)
            if not math.isfinite(loss):
                raise FloatingPointError("non-finite loss")
            new_params, state = adam_step(net.params(), grads, state, stage.lr, config.beta1, config.beta2, config.eps)
            net.set_params(new_params)
            history.append((step, k, stage.n_T, loss / scale))
            if progress is not None:
                progress(step, k, stage.n_T, loss / scale)
            step += 1
        if checkpoint_dir is not None:
            os.makedirs(checkpoint_dir, exist_ok=True)
            save_weights(net, os.path.join(checkpoint_dir, f"stage{k + 1}_weights.json"))
            with open(os.path.join(checkpoint_dir, f"stage{k + 1}_optimizer.json"), "w") as fh:
                json.dump(state.to_dict(), fh)
    return TrainResult(net, history, attempt, state, 1.0 if scale is None else scale)
