"""Command-line entry point: ``conslaw <command> [options]``.

Exit codes: 0 success, 1 numerical failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np

from conslaw import __version__

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    pass


# ----------------------------------------------------------------------
# helpers


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is None:
        args.seed = int(np.random.SeedSequence().entropy % (2**31))
    return args.seed


def _write_manifest(out: Path, args, extra=None) -> None:
    import scipy

    doc = {
        "command": args.command,
        "args": {k: v for k, v in vars(args).items() if k not in ("func",)},
        "seed": getattr(args, "seed", None),
        "versions": {
            "conslaw": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    if extra:
        doc.update(extra)
    with open(out / "manifest.json", "w") as fh:
        json.dump(doc, fh, indent=2, default=str)


def _load_model(spec: str):
    from conslaw.flux import load_model

    try:
        return load_model(spec)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"--model {spec!r}: {exc}") from None


def _load_ic(path: str):
    from conslaw.exact import PiecewiseConstantIC

    try:
        return PiecewiseConstantIC.load(path)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"--ic {path!r}: {exc}") from None


def _disc_from_args(args, ic):
    from conslaw.grid import Discretization

    x0 = ic.breakpoints[0] if args.x0 is None else args.x0
    if args.cells is None:
        span = ic.breakpoints[-1] - x0
        cells = int(round(span / args.dx))
    else:
        cells = args.cells
    try:
        return Discretization(args.dx, args.dt, cells, args.steps, x0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _jobs(args) -> int:
    from conslaw.evaluation import default_jobs

    return args.jobs if getattr(args, "jobs", None) else default_jobs()


def _runner_spec(args, scheme: str, weights_doc=None):
    from conslaw.evaluation import RunnerSpec

    return RunnerSpec(
        scheme,
        lxf_speed=args.lxf_speed,
        dg_degree=args.dg_degree,
        dg_limiter=args.dg_limiter,
        weights=weights_doc,
        clip=args.clip,
        cfl_check=getattr(args, "cfl_check", "error"),
    )


def _load_weights_doc(path):
    from conslaw.nn import FluxNetwork, WeightsFormatError

    try:
        with open(path) as fh:
            doc = json.load(fh)
        FluxNetwork.from_dict(doc)
        return doc
    except (OSError, json.JSONDecodeError, WeightsFormatError) as exc:
        raise ConfigError(f"--weights {path!r}: {exc}") from None


# ----------------------------------------------------------------------
# commands


def cmd_exact(args) -> int:
    from conslaw.exact import LaxHopf, exact_grid
    from conslaw.metrics import write_pgm

    model = _load_model(args.model)
    ic = _load_ic(args.ic)
    disc = _disc_from_args(args, ic)
    if disc.x_origin < ic.breakpoints[0] - 1e-12 or disc.x_right > ic.breakpoints[-1] + 1e-12:
        raise ConfigError(
            f"window [{disc.x_origin}, {disc.x_right}] is not inside the initial condition "
            f"[{ic.breakpoints[0]}, {ic.breakpoints[-1]}]; widen the IC or move --x0/--cells"
        )
    if args.no_extend:
        solver = LaxHopf(model, ic)
        g = args.ghosts
        edges = [disc.x_origin - g * disc.dx, disc.x_right + g * disc.dx]
        if not all(solver.covers(disc.t_final, e) for e in edges):
            raise ConfigError(
                "the initial condition does not cover the domain of dependence of the window "
                f"at t={disc.t_final}: extend it by at least {disc.t_final * max(solver.fastest, 0):.6g} "
                f"on the left and {disc.t_final * max(-solver.slowest, 0):.6g} on the right"
            )
    ic.check_range(model.u_max)
    grid, trace = exact_grid(model, ic, disc, ghost_width=args.ghosts)
    out = _out_dir(args.out)
    grid.to_csv(out / "grid.csv")
    trace.to_csv(out / "trace.csv")
    write_pgm(out / "heatmap.pgm", grid, model.u_max)
    _write_manifest(out, args)
    return EXIT_OK


def cmd_solve(args) -> int:
    from conslaw.grid import BoundaryTrace, cell_average_project
    from conslaw.metrics import write_pgm

    model = _load_model(args.model)
    ic = _load_ic(args.ic)
    ic.check_range(model.u_max)
    disc = _disc_from_args(args, ic)
    try:
        u0 = cell_average_project(ic, disc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.trace:
        try:
            trace = BoundaryTrace.from_csv(args.trace)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"--trace {args.trace!r}: {exc}") from None
        if trace.n_steps < disc.n_steps:
            raise ConfigError(f"trace has {trace.n_steps} steps, need {disc.n_steps}")
    else:
        trace = BoundaryTrace.constant(ic.values[0], ic.values[-1], disc.n_steps, 3)
    if args.scheme == "nfvm" and not args.weights:
        raise ConfigError("--scheme nfvm needs --weights")
    weights = _load_weights_doc(args.weights) if args.scheme == "nfvm" else None
    spec = _runner_spec(args, args.scheme, weights)
    if args.scheme == "dg":
        from conslaw.dg import dg_rollout

        res = dg_rollout(ic, model, trace, disc, args.dg_degree, args.dg_limiter, args.cfl_check)
        grid, ledger, correction = res.grid, res.mass_mismatch, np.zeros(disc.n_steps)
    elif args.scheme == "nfvm":
        from conslaw.nn import FluxNetwork, nfvm_rollout

        res = nfvm_rollout(u0, FluxNetwork.from_dict(weights), trace, disc, clip=spec.clip is not False)
        grid, ledger, correction = res.grid, res.mass_mismatch, res.clip_correction
    else:
        from conslaw.schemes import NumericalFluxSpec, fv_rollout

        fs = NumericalFluxSpec(args.scheme, model, args.lxf_speed, args.cfl_check)
        res = fv_rollout(u0, fs, trace, disc, bool(args.clip))
        grid = res.grid
        ledger = res.mass_mismatch
        correction = ledger if args.clip else np.zeros(disc.n_steps)
    out = _out_dir(args.out)
    grid.to_csv(out / "grid.csv")
    write_pgm(out / "heatmap.pgm", grid, model.u_max)
    masses = grid.masses()
    with open(out / "mass_ledger.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "mass", "boundary_inflow", "mismatch", "clip_correction"])
        for n in range(disc.n_steps):
            inflow = disc.dt * (res.boundary_flux[n, 0] - res.boundary_flux[n, 1])
            w.writerow([n + 1, f"{masses[n + 1]:.17g}", f"{inflow:.17g}", f"{ledger[n]:.6e}", f"{correction[n]:.6e}"])
    _write_manifest(out, args)
    return EXIT_OK


def cmd_train(args) -> int:
    from conslaw.grid import Discretization
    from conslaw.nn import FluxNetwork, save_weights
    from conslaw.training import TRAIN_DISC, TrainingConfig, generate_riemann_dataset, train

    try:
        with open(args.config) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"--config {args.config!r}: {exc}") from None
    extra = set(doc) - {"model", "dataset", "network", "training"}
    if extra:
        raise ConfigError(f"unknown config sections {sorted(extra)}")
    raw_model = doc.get("model", "greenshields")
    if isinstance(raw_model, str):
        model = _load_model(raw_model)
    else:
        from conslaw.flux import FluxModel

        try:
            model = FluxModel.from_dict(raw_model)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"model: {exc}") from None
    ds_doc = dict(doc.get("dataset", {}))
    net_doc = dict(doc.get("network", {}))
    try:
        tcfg = TrainingConfig.from_dict(dict(doc.get("training", {})))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"training: {exc}") from None
    if args.seed is not None:
        tcfg.seed = args.seed
    args.seed = tcfg.seed
    horizon = max(s.n_T for s in tcfg.stages)
    try:
        disc = Discretization(
            ds_doc.pop("dx", TRAIN_DISC.dx), ds_doc.pop("dt", TRAIN_DISC.dt),
            ds_doc.pop("n_cells", TRAIN_DISC.n_cells), horizon,
        )
        dataset = generate_riemann_dataset(
            model, int(ds_doc.pop("count", 2000)), disc, int(ds_doc.pop("seed", tcfg.seed)),
            float(ds_doc.pop("oversample_critical", tcfg.oversample_critical)),
        )
        if ds_doc:
            raise ValueError(f"unknown dataset fields {sorted(ds_doc)}")
        stencil = net_doc.pop("stencil", [2, 1])
        net = FluxNetwork.initialized(
            int(stencil[0]), int(stencil[1]), int(net_doc.pop("hidden_width", 15)),
            int(net_doc.pop("n_layers", 6)), net_doc.pop("activation", "relu"),
            model=model, clip_bound=net_doc.pop("clip_bound", None), seed=tcfg.seed,
        )
        if net_doc:
            raise ValueError(f"unknown network fields {sorted(net_doc)}")
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    out = _out_dir(args.out)

    def progress(step, stage, n_T, loss):
        if args.verbose and step % 50 == 0:
            print(f"step {step} stage {stage + 1} n_T {n_T} loss {loss:.6e}", file=sys.stderr)

    result = train(net, dataset, tcfg, model, checkpoint_dir=out / "checkpoints", progress=progress)
    save_weights(result.net, out / "weights.json")
    result.write_history(out / "history.csv")
    _write_manifest(out, args, {"config": doc, "restarts": result.restarts, "n_params": result.net.n_params,
                                "loss_scale": result.loss_scale})
    return EXIT_OK


def _eval_set(args, model):
    from conslaw.evaluation import eval_ics
    from conslaw.exact import PiecewiseConstantIC
    from conslaw.grid import Discretization
    from conslaw.training import EVAL_DISC

    if args.eval_set:
        try:
            with open(args.eval_set) as fh:
                doc = json.load(fh)
            d = doc.get("disc", {})
            disc = Discretization(d.get("dx", EVAL_DISC.dx), d.get("dt", EVAL_DISC.dt), d.get("n_cells", EVAL_DISC.n_cells),
                                  d.get("n_steps", EVAL_DISC.n_steps), d.get("x_origin", 0.0))
            if "ics" in doc:
                ics = [PiecewiseConstantIC.from_dict(x) for x in doc["ics"]]
            else:
                g = doc.get("generate", {})
                ics = eval_ics(model, int(g.get("count", 100)), int(g.get("n_pieces", 10)), disc,
                               int(g.get("seed", _resolve_seed(args))), g.get("breakpoints", "uniform"))
        except (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"--eval-set {args.eval_set!r}: {exc}") from None
        return ics, disc
    disc = EVAL_DISC
    return eval_ics(model, args.count, args.n_pieces, disc, _resolve_seed(args), args.breakpoints), disc


def _scheme_list(text: str) -> list[str]:
    from conslaw.evaluation import ALL_SCHEMES

    names = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in names if s not in ALL_SCHEMES]
    if bad:
        raise ConfigError(f"unknown schemes {bad}; choose from {list(ALL_SCHEMES)}")
    return names


def cmd_evaluate(args) -> int:
    from conslaw.evaluation import evaluate

    model = _load_model(args.model)
    ics, disc = _eval_set(args, model)
    specs = []
    if args.weights:
        specs.append(_runner_spec(args, "nfvm", _load_weights_doc(args.weights)))
    for s in _scheme_list(args.baselines):
        if s == "nfvm":
            continue
        specs.append(_runner_spec(args, s))
    if not specs:
        raise ConfigError("nothing to evaluate: pass --weights and/or --baselines")
    report = evaluate(model, specs, ics, disc, _jobs(args), args.winrate_metric)
    out = _out_dir(args.out)
    report.to_json(out / "report.json")
    report.to_csv(str(out / "report"))
    with open(out / "winrates.json", "w") as fh:
        json.dump(report.winrates.to_dict(), fh, indent=2)
    _write_manifest(out, args)
    for name, m in report.per_scheme.items():
        print(f"{name:10s} L1 {m['l1'][0]:.3e}  L2 {m['l2'][0]:.3e}  Rel {m['rel'][0]:.3e}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    from conslaw.calibration import (
        CalibrationData,
        DEConfig,
        FDSamples,
        ParamBounds,
        Units,
        calibrate,
    )
    from conslaw.grid import BoundaryTrace, SolutionGrid

    mode = "prediction" if args.mode == "pred" else "fd"
    data = CalibrationData()
    try:
        if mode == "fd":
            data.fd = FDSamples.from_csv(args.data)
            if args.grid:
                data.grid = SolutionGrid.from_csv(args.grid)
        else:
            data.grid = SolutionGrid.from_csv(args.data)
            if args.fd:
                data.fd = FDSamples.from_csv(args.fd)
        if args.trace:
            data.trace = BoundaryTrace.from_csv(args.trace)
        bounds = None
        if args.bounds:
            with open(args.bounds) as fh:
                bounds = ParamBounds.from_dict(json.load(fh))
    except (OSError, ValueError, KeyError, TypeError, IndexError, json.JSONDecodeError) as exc:
        raise ConfigError(str(exc)) from None
    cfg = DEConfig(pop_factor=args.pop_factor, max_gens=args.max_gens, seed=_resolve_seed(args))
    units = Units(args.density_factor, args.speed_factor)
    try:
        model, report = calibrate(args.family, mode, data, bounds, cfg, args.scheme, units)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _out_dir(args.out)
    report.to_json(out / "report.json")
    with open(out / "model.json", "w") as fh:
        fh.write(model.to_json())
    _write_manifest(out, args)
    print(json.dumps(report.to_dict()["params"]))
    return EXIT_OK


def cmd_convergence(args) -> int:
    from conslaw.evaluation import eval_ics
    from conslaw.grid import Discretization
    from conslaw.metrics import convergence_study

    model = _load_model(args.model)
    if args.scheme not in ("godunov", "lxf", "eo", "eno3", "weno5", "dg", "nfvm"):
        raise ConfigError(f"unknown scheme {args.scheme!r}")
    if args.scheme == "nfvm" and not args.weights:
        raise ConfigError("--scheme nfvm needs --weights")
    weights = _load_weights_doc(args.weights) if args.scheme == "nfvm" else None
    spec = _runner_spec(args, args.scheme, weights)
    try:
        dts = [float(x) for x in args.dts.split(",")]
    except ValueError:
        raise ConfigError("--dts must be a comma-separated list of numbers") from None
    window = (0.0, 1.0)
    ics = eval_ics(model, args.count, args.n_pieces, Discretization(0.1, 0.01, 10, 1), _resolve_seed(args), args.breakpoints)
    try:
        table = convergence_study(spec.runner(model), model, ics, dts, args.ratio, args.t_final, window, args.metric)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _out_dir(args.out)
    with open(out / "convergence.json", "w") as fh:
        json.dump(table.to_dict(), fh, indent=2)
    with open(out / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dx", "dt", f"mean_{table.metric}", "std"])
        for row in zip(table.dx, table.dt, table.mean, table.std):
            w.writerow([f"{x:.6e}" for x in row])
    _write_manifest(out, args)
    for dx, m in zip(table.dx, table.mean):
        print(f"dx {dx:.3e}  {table.metric} {m:.4e}")
    print("order", "n/a" if table.order is None else f"{table.order:.3f}")
    return EXIT_OK


def cmd_dtw(args) -> int:
    from conslaw.grid import SolutionGrid
    from conslaw.metrics import dtw_distance

    try:
        a = SolutionGrid.from_csv(args.pred)
        b = SolutionGrid.from_csv(args.exact)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if a.values.shape[1] != b.values.shape[1]:
        raise ConfigError("grids have different cell counts")
    cells = range(a.values.shape[1]) if args.cells == "all" else [int(c) for c in args.cells.split(",")]
    out = _out_dir(args.out)
    rows = []
    for j in cells:
        if not 0 <= j < a.values.shape[1]:
            raise ConfigError(f"cell index {j} out of range")
        rows.append((j, dtw_distance(a.values[:, j], b.values[:, j])))
    with open(out / "dtw.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", "dtw"])
        for j, d in rows:
            w.writerow([j, f"{d:.17g}"])
    _write_manifest(out, args)
    print(f"mean dtw {np.mean([d for _, d in rows]):.6e} over {len(rows)} cells")
    return EXIT_OK


def cmd_rerun(args) -> int:
    """Replay a run from its manifest into a new output directory."""
    try:
        with open(args.manifest) as fh:
            doc = json.load(fh)
        recorded = dict(doc["args"])
        command = doc["command"]
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"--manifest {args.manifest!r}: {exc}") from None
    if command not in _COMMANDS or command == "rerun":
        raise ConfigError(f"cannot replay command {command!r}")
    recorded.update(command=command, out=args.out, seed=doc.get("seed", recorded.get("seed")))
    return _COMMANDS[command](argparse.Namespace(**recorded))


# ----------------------------------------------------------------------
# parser


def _add_scheme_opts(p, with_scheme=True):
    if with_scheme:
        p.add_argument("--scheme", default="godunov", choices=["godunov", "lxf", "eo", "eno3", "weno5", "dg", "nfvm"])
    p.add_argument("--lxf-speed", default="sup", choices=["sup", "mesh"], help="Lax-Friedrichs dissipation speed")
    p.add_argument("--dg-degree", type=int, default=1, choices=[0, 1, 2])
    p.add_argument("--dg-limiter", default="minmod", choices=["minmod", "none"])
    p.add_argument("--clip", action=argparse.BooleanOptionalAction, default=None,
                   help="box-clip updates to [0, u_max] (default: on for nfvm, off otherwise)")
    p.add_argument("--cfl-check", default="error", choices=["error", "warn", "off"])
    p.add_argument("--weights", help="network weights JSON (for nfvm)")


def _add_grid_opts(p):
    p.add_argument("--dx", type=float, required=True)
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--x0", type=float, default=None, help="left window edge (default: first IC breakpoint)")
    p.add_argument("--cells", type=int, default=None, help="cell count (default: cover the IC)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conslaw", description="Scalar conservation-law solvers and learned fluxes.")
    parser.add_argument("--version", action="version", version=f"conslaw {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="random seed (drawn and recorded if absent)")
        p.add_argument("--jobs", type=int, default=None, help="worker processes (default: $CONSLAW_JOBS or cores)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("solve", help="roll out a numerical scheme")
    p.add_argument("--model", required=True, help="family name, name:k=v,... or model JSON")
    p.add_argument("--ic", required=True, help="piecewise-constant IC JSON")
    p.add_argument("--trace", help="boundary trace CSV (default: constant edge values)")
    _add_grid_opts(p)
    _add_scheme_opts(p)
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("exact", help="exact cell averages and ghost trace")
    p.add_argument("--model", required=True)
    p.add_argument("--ic", required=True)
    _add_grid_opts(p)
    p.add_argument("--ghosts", type=int, default=3, help="ghost cells per side in the trace")
    p.add_argument("--no-extend", action="store_true",
                   help="reject ICs that do not cover the domain of dependence instead of extending them")
    common(p)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("train", help="train a learned flux")
    p.add_argument("--config", required=True, help="JSON with model/dataset/network/training sections")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score schemes on piecewise-constant ICs")
    p.add_argument("--model", default="greenshields")
    p.add_argument("--eval-set", help="JSON with 'ics' (and optional 'disc') or a 'generate' block")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--n-pieces", type=int, default=10)
    p.add_argument("--breakpoints", default="uniform", choices=["uniform", "random"])
    p.add_argument("--baselines", default="godunov,lxf,eo,eno3,weno5,dg")
    p.add_argument("--winrate-metric", default="l2", choices=["l1", "l2", "rel"])
    _add_scheme_opts(p, with_scheme=False)
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("calibrate", help="fit flux parameters with differential evolution")
    p.add_argument("--family", required=True)
    p.add_argument("--mode", required=True, choices=["pred", "fd"])
    p.add_argument("--data", required=True, help="grid CSV (pred) or density,flow CSV (fd)")
    p.add_argument("--grid", help="measured grid CSV, for the cross-metric in fd mode")
    p.add_argument("--fd", help="FD CSV, for the cross-metric in pred mode")
    p.add_argument("--trace", help="boundary trace CSV for pred mode (default: measured edge cells)")
    p.add_argument("--bounds", help="JSON {param: [lo, hi]}")
    p.add_argument("--scheme", default="godunov", choices=["godunov", "lxf", "eo", "eno3", "weno5"])
    p.add_argument("--pop-factor", type=int, default=15)
    p.add_argument("--max-gens", type=int, default=300)
    p.add_argument("--density-factor", type=float, default=1.0, help="physical density -> solver units")
    p.add_argument("--speed-factor", type=float, default=1.0, help="physical speed -> solver units")
    common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("convergence", help="error against mesh refinement at fixed dt/dx")
    p.add_argument("--model", default="greenshields")
    p.add_argument("--dts", default="1e-3,5e-4,2.5e-4,1.25e-4")
    p.add_argument("--ratio", type=float, default=0.1)
    p.add_argument("--t-final", type=float, default=0.5)
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--n-pieces", type=int, default=10)
    p.add_argument("--breakpoints", default="uniform", choices=["uniform", "random"])
    p.add_argument("--metric", default="l2", choices=["l1", "l2", "rms", "rel"])
    _add_scheme_opts(p)
    common(p)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("dtw", help="per-cell DTW distance between two grids' time series")
    p.add_argument("--pred", required=True)
    p.add_argument("--exact", required=True)
    p.add_argument("--cells", default="all", help="'all' or comma-separated cell indices")
    common(p)
    p.set_defaults(func=cmd_dtw)

    p = sub.add_parser("rerun", help="replay a previous run from its manifest.json")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rerun)
    return parser


_COMMANDS = {
    "solve": cmd_solve,
    "exact": cmd_exact,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "calibrate": cmd_calibrate,
    "convergence": cmd_convergence,
    "dtw": cmd_dtw,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    from conslaw.training import TrainingDivergedError

    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"conslaw {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as exc:
        print(f"conslaw {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"conslaw {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, FileNotFoundError) as exc:
        print(f"conslaw {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
