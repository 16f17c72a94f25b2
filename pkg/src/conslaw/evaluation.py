"""Benchmark harness: run schemes on piecewise-constant initial conditions and score them."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from conslaw.dg import dg_rollout
from conslaw.exact import PiecewiseConstantIC, exact_grid
from conslaw.flux import FluxModel
from conslaw.grid import Discretization
from conslaw.metrics import MetricsReport, error_norms
from conslaw.nn import FluxNetwork, nfvm_rollout
from conslaw.schemes import SCHEMES, NumericalFluxSpec, fv_rollout
from conslaw.training import EVAL_DISC, random_piecewise_ic

ALL_SCHEMES = SCHEMES + ("dg", "nfvm")


@dataclass
class RunnerSpec:
    """Picklable description of one scheme configuration."""

    scheme: str
    lxf_speed: str = "sup"
    dg_degree: int = 1
    dg_limiter: str = "minmod"
    weights: dict | None = None  # FluxNetwork.to_dict() for nfvm
    clip: bool | None = None  # default: on for nfvm, off otherwise
    cfl_check: str = "error"
    label: str = ""

    def __post_init__(self):
        if self.scheme not in ALL_SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {ALL_SCHEMES}")
        if self.scheme == "nfvm" and self.weights is None:
            raise ValueError("nfvm needs network weights")
        if not self.label:
            self.label = self.default_label()

    def default_label(self) -> str:
        if self.scheme == "lxf" and self.lxf_speed == "mesh":
            return "lxf_mesh"
        if self.scheme == "dg":
            return f"dg{self.dg_degree}" if self.dg_degree != 1 else "dg"
        return self.scheme

    def runner(self, model: FluxModel):
        """Callable (u0, trace, disc, ic) -> predicted values (n_steps + 1, n_cells)."""
        if self.scheme == "dg":
            def run(u0, trace, disc, ic=None):
                src = ic if ic is not None else u0
                return dg_rollout(src, model, trace, disc, self.dg_degree, self.dg_limiter, self.cfl_check).grid.values
            return run
        if self.scheme == "nfvm":
            net = FluxNetwork.from_dict(self.weights)
            clip = True if self.clip is None else self.clip

            def run(u0, trace, disc, ic=None):
                return nfvm_rollout(u0, net, trace, disc, clip=clip).grid.values
            return run
        spec = NumericalFluxSpec(self.scheme, model, self.lxf_speed, self.cfl_check)
        clip = bool(self.clip)

        def run(u0, trace, disc, ic=None):
            return fv_rollout(u0, spec, trace, disc, clip).grid.values
        return run


def default_jobs() -> int:
    env = os.environ.get("CONSLAW_JOBS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _score_case(args):
    model_doc, specs, ic_doc, disc = args
    model = FluxModel.from_dict(model_doc)
    ic = PiecewiseConstantIC.from_dict(ic_doc)
    grid, trace = exact_grid(model, ic, disc)
    out = {}
    for spec in specs:
        pred = spec.runner(model)(grid.values[0], trace, disc, ic)
        out[spec.label] = error_norms(pred, grid, u_max=model.u_max)
    return out


def eval_ics(model: FluxModel, count: int, n_pieces: int = 10, disc: Discretization = EVAL_DISC, seed: int = 0,
             breakpoints: str = "uniform") -> list[PiecewiseConstantIC]:
    rng = np.random.default_rng(seed)
    return [random_piecewise_ic(model, rng, n_pieces, disc.x_origin, disc.x_right, breakpoints) for _ in range(count)]


@dataclass
class EvaluationResult:
    report: MetricsReport
    per_ic: dict[str, dict[str, list[float]]] = field(default_factory=dict)


def evaluate(
    model: FluxModel,
    specs: list[RunnerSpec],
    ics: list[PiecewiseConstantIC],
    disc: Discretization = EVAL_DISC,
    jobs: int = 1,
    winrate_metric: str = "l2",
) -> MetricsReport:
    """Score every scheme on every initial condition against the exact solution."""
    labels = [s.label for s in specs]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate scheme labels {labels}")
    tasks = [(model.to_dict(), specs, ic.to_dict(), disc) for ic in ics]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_score_case, tasks))
    else:
        results = [_score_case(t) for t in tasks]
    per_ic = {lab: {"l1": [], "l2": [], "rel": []} for lab in labels}
    for res in results:
        for lab in labels:
            l1, l2, rel = res[lab]
            per_ic[lab]["l1"].append(l1)
            per_ic[lab]["l2"].append(l2)
            per_ic[lab]["rel"].append(rel)
    meta = {
        "model": model.to_dict(),
        "n_ics": len(ics),
        "disc": {"dx": disc.dx, "dt": disc.dt, "n_cells": disc.n_cells, "n_steps": disc.n_steps,
                 "x_origin": disc.x_origin},
        "winrate_metric": winrate_metric,
        "schemes": labels,
    }
    return MetricsReport.from_errors(per_ic, winrate_metric, meta)
