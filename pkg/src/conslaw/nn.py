"""Learned numerical flux: a small MLP slid along cell interfaces.

A network with stencil (a, b) sees ``a`` cells around each interface over the
last ``b`` timesteps. For interface j-1/2 the spatial window is cells
``j - a/2 .. j + a/2 - 1``; temporal slices are stacked oldest first into one
input vector of length a*b. Gradients of any scalar loss on the rollout are
obtained by reverse accumulation (``rollout_backward``), replaying each step's
forward pass from the recorded padded rows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from conslaw.flux import FluxModel
from conslaw.grid import BoundaryTrace, Discretization, SolutionGrid

WEIGHTS_VERSION = 1
ACTIVATIONS = ("relu", "elu")
CLIP_HEADROOM = 1.05
OUTPUT_INIT_SCALE = 0.1


class WeightsFormatError(ValueError):
    pass


def lxf_flux_bound(model: FluxModel, n: int = 201) -> float:
    """max |F_LxF| over [0, u_max]^2 with the global-sup dissipation speed."""
    c = model.max_wave_speed(0.0, model.u_max)
    if not math.isfinite(c):
        return math.inf
    u = np.linspace(0.0, model.u_max, n)
    ul, ur = np.meshgrid(u, u, indexing="ij")
    table = 0.5 * (model._f(ul) + model._f(ur)) - 0.5 * c * (ur - ul)
    return float(np.max(np.abs(table)))


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))


def _act_grad(z, kind):
    if kind == "relu":
        return (z > 0).astype(float)
    return np.where(z > 0, 1.0, np.exp(np.minimum(z, 0.0)))


@dataclass
class FluxNetwork:
    stencil_a: int = 2
    stencil_b: int = 1
    hidden_width: int = 15
    n_layers: int = 6
    activation: str = "relu"
    clip_bound: float = math.inf
    u_max: float = 1.0
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.stencil_a < 2 or self.stencil_a % 2:
            raise ValueError("stencil_a must be a positive even integer")
        if self.stencil_b < 1:
            raise ValueError("stencil_b must be >= 1")
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if not self.weights:
            self.weights = [np.zeros((i, o)) for i, o in self.layer_shapes()]
            self.biases = [np.zeros(o) for _, o in self.layer_shapes()]
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        for (i, o), w, b in zip(self.layer_shapes(), self.weights, self.biases, strict=True):
            if w.shape != (i, o) or b.shape != (o,):
                raise ValueError(f"layer shape mismatch: expected ({i}, {o}), got {w.shape} / {b.shape}")

    # ------------------------------------------------------------------
    @classmethod
    def initialized(
        cls,
        stencil_a: int = 2,
        stencil_b: int = 1,
        hidden_width: int = 15,
        n_layers: int = 6,
        activation: str = "relu",
        model: FluxModel | None = None,
        clip_bound: float | None = None,
        seed: int = 0,
    ) -> FluxNetwork:
        """He-uniform weights and zero biases from a seeded generator.

        The output layer is scaled down so that fresh networks start well inside
        the clip bound instead of saturating it (which would zero every gradient).
        """
        net = cls(stencil_a, stencil_b, hidden_width, n_layers, activation)
        if model is not None:
            net.attach_model(model, clip_bound)
        elif clip_bound is not None:
            net.clip_bound = float(clip_bound)
        rng = np.random.default_rng(seed)
        for k, (i, o) in enumerate(net.layer_shapes()):
            lim = math.sqrt(6.0 / i) * (OUTPUT_INIT_SCALE if k == net.n_layers - 1 else 1.0)
            net.weights[k] = rng.uniform(-lim, lim, size=(i, o))
            net.biases[k] = np.zeros(o)
        return net

    def attach_model(self, model: FluxModel, clip_bound: float | None = None) -> None:
        bound = lxf_flux_bound(model)
        if clip_bound is None:
            clip_bound = CLIP_HEADROOM * bound
        elif clip_bound < bound:
            raise ValueError(f"clip bound {clip_bound} is below max|F_LxF| = {bound}")
        self.clip_bound = float(clip_bound)
        self.u_max = model.u_max

    @property
    def input_dim(self) -> int:
        return self.stencil_a * self.stencil_b

    @property
    def ghost_width(self) -> int:
        return self.stencil_a // 2

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = [self.input_dim] + [self.hidden_width] * (self.n_layers - 1) + [1]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_params(self, params: list[np.ndarray]) -> None:
        self.weights = [np.array(p, dtype=float) for p in params[0::2]]
        self.biases = [np.array(p, dtype=float) for p in params[1::2]]

    def copy(self) -> FluxNetwork:
        return FluxNetwork(
            self.stencil_a,
            self.stencil_b,
            self.hidden_width,
            self.n_layers,
            self.activation,
            self.clip_bound,
            self.u_max,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    # ------------------------------------------------------------------
    def forward(self, windows, return_cache: bool = False):
        """Flux for each row of ``windows`` (shape (..., a*b)); output clipped to [-D, D]."""
        x = np.asarray(windows, dtype=float)
        lead = x.shape[:-1]
        h = x.reshape(-1, x.shape[-1])
        pre = []
        acts = [h]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if k < last:
                pre.append(z)
                h = _act(z, self.activation)
                acts.append(h)
            else:
                h = z
        raw = h[:, 0]
        out = np.clip(raw, -self.clip_bound, self.clip_bound).reshape(lead)
        if return_cache:
            return out, (acts, pre, raw)
        return out

    __call__ = forward

    def backward(self, cache, grad_out):
        """Parameter gradients and input gradient given d(loss)/d(output)."""
        acts, pre, raw = cache
        g = np.asarray(grad_out, dtype=float).reshape(-1)
        g = np.where(np.abs(raw) <= self.clip_bound, g, 0.0)[:, None]
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        for k in range(len(self.weights) - 1, -1, -1):
            grads_w[k] = acts[k].T @ g
            grads_b[k] = g.sum(axis=0)
            g = g @ self.weights[k].T
            if k > 0:
                g = g * _act_grad(pre[k - 1], self.activation)
        flat = []
        for gw, gb in zip(grads_w, grads_b):
            flat += [gw, gb]
        return flat, g

    def pairwise(self, u_left, u_right):
        """Two-point flux F(u_left, u_right) for a=2, b=1 networks (diagnostics)."""
        if (self.stencil_a, self.stencil_b) != (2, 1):
            raise ValueError("pairwise evaluation needs a (2, 1) stencil")
        ul, ur = np.broadcast_arrays(np.asarray(u_left, float), np.asarray(u_right, float))
        return self.forward(np.stack([ul, ur], axis=-1))

    # ------------------------------------------------------------------
    def to_dict(self) -> dict:
        def num(v):
            return format(float(v), ".17g")

        return {
            "version": WEIGHTS_VERSION,
            "stencil": [self.stencil_a, self.stencil_b],
            "activation": self.activation,
            "clip_bound": num(self.clip_bound),
            "u_max": num(self.u_max),
            "hidden_width": self.hidden_width,
            "n_layers": self.n_layers,
            "layers": [
                {"w": [[num(v) for v in row] for row in w], "b": [num(v) for v in b]}
                for w, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> FluxNetwork:
        def need(key):
            if key not in doc:
                raise WeightsFormatError(f"$.{key}: missing field")
            return doc[key]

        if need("version") != WEIGHTS_VERSION:
            raise WeightsFormatError(f"$.version: expected {WEIGHTS_VERSION}, got {doc['version']!r}")
        stencil = need("stencil")
        if not (isinstance(stencil, list) and len(stencil) == 2):
            raise WeightsFormatError("$.stencil: expected [a, b]")
        layers = need("layers")
        if not isinstance(layers, list) or not layers:
            raise WeightsFormatError("$.layers: expected a nonempty list")
        ws, bs = [], []
        for k, layer in enumerate(layers):
            try:
                ws.append(np.array([[float(v) for v in row] for row in layer["w"]], dtype=float))
                bs.append(np.array([float(v) for v in layer["b"]], dtype=float))
            except (KeyError, TypeError, ValueError) as exc:
                raise WeightsFormatError(f"$.layers[{k}]: {exc}") from None
        hidden = int(doc.get("hidden_width", ws[0].shape[1] if len(ws) > 1 else 1))
        try:
            return cls(
                int(stencil[0]),
                int(stencil[1]),
                hidden,
                int(doc.get("n_layers", len(ws))),
                need("activation"),
                float(need("clip_bound")),
                float(doc.get("u_max", 1.0)),
                ws,
                bs,
            )
        except ValueError as exc:
            raise WeightsFormatError(f"$: {exc}") from None


def save_weights(net: FluxNetwork, path) -> None:
    with open(path, "w") as fh:
        json.dump(net.to_dict(), fh)


def load_weights(path) -> FluxNetwork:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise WeightsFormatError(f"not valid JSON: {exc}") from None
    return FluxNetwork.from_dict(doc)


# ----------------------------------------------------------------------
# sliding evaluation


def stencil_windows(history: np.ndarray, a: int) -> np.ndarray:
    """Interface windows from padded history (..., b, n_cells + a) -> (..., n_cells + 1, a*b)."""
    h = np.asarray(history, dtype=float)
    n_if = h.shape[-1] - a + 1
    idx = np.arange(n_if)[:, None] + np.arange(a)[None, :]
    w = h[..., idx]  # (..., b, n_if, a)
    w = np.moveaxis(w, -3, -2)  # (..., n_if, b, a)
    return w.reshape(w.shape[:-2] + (w.shape[-2] * w.shape[-1],))


def batched_interface_fluxes(net, padded_history) -> np.ndarray:
    """One flux per interface from padded history of shape (..., b, n_cells + a)."""
    h = np.asarray(padded_history, dtype=float)
    if h.shape[-2] != net.stencil_b:
        raise ValueError(f"history depth {h.shape[-2]} != stencil_b {net.stencil_b}")
    if h.shape[-1] < net.stencil_a + 1:
        raise ValueError("history too narrow for the stencil")
    return net.forward(stencil_windows(h, net.stencil_a))


def network_forward(net, window) -> float:
    return float(net.forward(np.asarray(window, dtype=float).reshape(1, -1))[0])


# ----------------------------------------------------------------------
# rollouts


@dataclass
class GradientTape:
    """Padded rows and pre-clip updates of a batched rollout, enough to replay it."""

    padded: np.ndarray  # (B, n_T, n_cells + a) input rows with ghosts
    pre_clip: np.ndarray  # (B, n_T, n_cells)
    lam: float
    clip: bool
    u_max: float
    first_learned: int = 0  # steps before this index were bootstrapped

    @property
    def horizon(self) -> int:
        return self.padded.shape[1]


def _history_rows(n: int, b: int) -> list[int]:
    return [max(n - b + 1 + k, 0) for k in range(b)]


def nfvm_rollout_batch(
    u0,
    net: FluxNetwork,
    ghosts_left,
    ghosts_right,
    lam: float,
    n_steps: int,
    clip: bool = True,
    record: bool = False,
    bootstrap=None,
):
    """Autoregressive rollouts for a batch.

    ``u0`` is (B, n_cells); ghosts are (B, >= n_steps, width) with the innermost
    column touching the domain. Returns values (B, n_steps + 1, n_cells) and,
    when ``record``, a GradientTape. ``bootstrap`` (a two-point flux callable)
    fills the first b-1 steps instead of replicating the initial row.
    """
    u0 = np.atleast_2d(np.asarray(u0, dtype=float))
    B, N = u0.shape
    g = net.ghost_width
    b = net.stencil_b
    gl_all = _fit_ghosts(np.asarray(ghosts_left, dtype=float), g, "left")
    gr_all = _fit_ghosts(np.asarray(ghosts_right, dtype=float), g, "right")
    if gl_all.shape[1] < n_steps or gr_all.shape[1] < n_steps:
        raise ValueError("ghost traces shorter than the rollout")
    vals = np.empty((B, n_steps + 1, N))
    vals[:, 0] = u0
    padded = np.empty((B, max(n_steps, 1), N + 2 * g))
    pre_clip = np.empty((B, max(n_steps, 1), N))
    first = 0
    for n in range(n_steps):
        padded[:, n] = np.concatenate([gl_all[:, n], vals[:, n], gr_all[:, n]], axis=1)
        if bootstrap is not None and n < b - 1:
            row = padded[:, n]
            F = bootstrap(row[:, g - 1 : g + N], row[:, g : g + N + 1])
            first = n + 1
        else:
            hist = padded[:, _history_rows(n, b)]
            F = batched_interface_fluxes(net, hist)
        pre = vals[:, n] + lam * (F[:, :-1] - F[:, 1:])
        pre_clip[:, n] = pre
        vals[:, n + 1] = np.clip(pre, 0.0, net.u_max) if clip else pre
    if record:
        return vals, GradientTape(padded[:, :n_steps], pre_clip[:, :n_steps], lam, clip, net.u_max, first)
    return vals


def _fit_ghosts(arr, width, side):
    if arr.ndim == 2:
        arr = arr[:, :, None]
    have = arr.shape[-1]
    if have >= width:
        return arr[..., have - width :] if side == "left" else arr[..., :width]
    pad = width - have
    if side == "left":
        return np.concatenate([np.repeat(arr[..., :1], pad, axis=-1), arr], axis=-1)
    return np.concatenate([arr, np.repeat(arr[..., -1:], pad, axis=-1)], axis=-1)


def rollout_backward(net: FluxNetwork, tape: GradientTape, grad_values) -> list[np.ndarray]:
    """Parameter gradients of a scalar loss given d(loss)/d(values) for rows 0..n_T.

    Clips use the subgradient 1 inside the box and on its boundary, 0 outside.
    """
    gv = np.asarray(grad_values, dtype=float)
    B, n_T, N = tape.pre_clip.shape
    if gv.shape != (B, n_T + 1, N):
        raise ValueError(f"gradient has shape {gv.shape}, expected {(B, n_T + 1, N)}")
    g = net.ghost_width
    a, b = net.stencil_a, net.stencil_b
    acc = gv.copy()
    grads = [np.zeros_like(p) for p in net.params()]
    lam = tape.lam
    for n in range(n_T - 1, -1, -1):
        gnext = acc[:, n + 1]
        if tape.clip:
            pre = tape.pre_clip[:, n]
            inside = (pre >= 0.0) & (pre <= tape.u_max)
            gnext = np.where(inside, gnext, 0.0)
        acc[:, n] += gnext
        if n < tape.first_learned:
            continue
        # d pre_j / d F_i: +lam for i = j, -lam for i = j + 1
        gF = np.zeros((B, N + 1))
        gF[:, :-1] += lam * gnext
        gF[:, 1:] -= lam * gnext
        rows = _history_rows(n, b)
        hist = tape.padded[:, rows]
        windows = stencil_windows(hist, a)
        _, cache = net.forward(windows, return_cache=True)
        pgrads, gx = net.backward(cache, gF)
        for k, pg in enumerate(pgrads):
            grads[k] += pg
        # scatter window gradients back to the interior cells of each history row
        gx = gx.reshape(B, N + 1, b, a)
        for slot, r in enumerate(rows):
            gpad = np.zeros((B, N + 2 * g))
            for c in range(a):
                gpad[:, c : c + N + 1] += gx[:, :, slot, c]
            acc[:, r] += gpad[:, g : g + N]
    return grads


@dataclass
class NFVMRollout:
    grid: SolutionGrid
    boundary_flux: np.ndarray  # (n_steps, 2)
    clip_correction: np.ndarray  # (n_steps,) mass added by the box clip

    @property
    def mass_mismatch(self) -> np.ndarray:
        from conslaw.grid import mass_ledger

        return mass_ledger(self.grid, self.boundary_flux)


def nfvm_step(history, net: FluxNetwork, ghosts, disc: Discretization, clip: bool = True):
    """Next row from a history of rows (oldest first); short histories replicate the oldest row."""
    hist = np.atleast_2d(np.asarray(history, dtype=float))
    b = net.stencil_b
    if hist.shape[0] < b:
        hist = np.concatenate([np.repeat(hist[:1], b - hist.shape[0], axis=0), hist])
    hist = hist[-b:]
    g = net.ghost_width
    gl = _fit_ghosts(np.atleast_2d(np.asarray(ghosts[0], float))[None], g, "left")[0]
    gr = _fit_ghosts(np.atleast_2d(np.asarray(ghosts[1], float))[None], g, "right")[0]
    if gl.shape[0] == 1 and b > 1:
        gl = np.repeat(gl, b, axis=0)
        gr = np.repeat(gr, b, axis=0)
    padded = np.concatenate([gl[-b:], hist, gr[-b:]], axis=1)
    F = batched_interface_fluxes(net, padded)
    pre = hist[-1] + disc.cfl_ratio * (F[:-1] - F[1:])
    return np.clip(pre, 0.0, net.u_max) if clip else pre


def nfvm_rollout(
    ic_field,
    net: FluxNetwork,
    trace: BoundaryTrace,
    disc: Discretization,
    n_steps: int | None = None,
    clip: bool = True,
    bootstrap=None,
) -> NFVMRollout:
    n_steps = disc.n_steps if n_steps is None else n_steps
    u0 = np.asarray(ic_field, dtype=float)
    if u0.shape != (disc.n_cells,):
        raise ValueError(f"initial field has shape {u0.shape}, expected ({disc.n_cells},)")
    if trace.n_steps < n_steps:
        raise ValueError(f"boundary trace has {trace.n_steps} steps, need {n_steps}")
    vals, tape = nfvm_rollout_batch(
        u0[None], net, trace.left[None, :n_steps], trace.right[None, :n_steps],
        disc.cfl_ratio, n_steps, clip, record=True, bootstrap=bootstrap,
    )
    vals = vals[0]
    d = disc.with_steps(n_steps)
    bflux = np.empty((n_steps, 2))
    g = net.ghost_width
    N = disc.n_cells
    b = net.stencil_b
    for n in range(n_steps):
        # boundary fluxes recomputed from the tape so the ledger uses the same values
        if bootstrap is not None and n < tape.first_learned:
            row = tape.padded[0, n]
            F = bootstrap(row[g - 1 : g + N], row[g : g + N + 1])
        else:
            F = batched_interface_fluxes(net, tape.padded[0, _history_rows(n, b)])
        bflux[n] = (F[0], F[-1])
    correction = disc.dx * (vals[1:] - tape.pre_clip[0]).sum(axis=1) if n_steps else np.empty(0)
    return NFVMRollout(SolutionGrid(d, vals), bflux, correction)
