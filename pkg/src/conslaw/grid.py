"""Uniform space-time meshes, solution storage and mass bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from conslaw.exact import PiecewiseConstantIC


@dataclass(frozen=True)
class Discretization:
    dx: float
    dt: float
    n_cells: int
    n_steps: int
    x_origin: float = 0.0
    cfl_ratio: float = field(init=False)

    def __post_init__(self):
        if not (self.dx > 0 and self.dt > 0):
            raise ValueError("dx and dt must be positive")
        if self.n_cells < 1 or self.n_steps < 0:
            raise ValueError("need n_cells >= 1 and n_steps >= 0")
        object.__setattr__(self, "n_cells", int(self.n_cells))
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "cfl_ratio", self.dt / self.dx)

    @property
    def length(self) -> float:
        return self.n_cells * self.dx

    @property
    def x_right(self) -> float:
        return self.x_origin + self.length

    @property
    def t_final(self) -> float:
        return self.n_steps * self.dt

    @property
    def edges(self) -> np.ndarray:
        return self.x_origin + self.dx * np.arange(self.n_cells + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.x_origin + self.dx * (np.arange(self.n_cells) + 0.5)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def with_steps(self, n_steps: int) -> Discretization:
        return Discretization(self.dx, self.dt, self.n_cells, n_steps, self.x_origin)

    def header(self) -> str:
        return (
            f"# dx={self.dx!r} dt={self.dt!r} n_cells={self.n_cells} "
            f"n_steps={self.n_steps} x_origin={self.x_origin!r}"
        )


@dataclass
class SolutionGrid:
    """Cell values indexed ``values[timestep, cell]``."""

    disc: Discretization
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.disc.n_steps + 1, self.disc.n_cells)
        if self.values.shape != expected:
            raise ValueError(f"grid values have shape {self.values.shape}, expected {expected}")

    def __eq__(self, other):
        if not isinstance(other, SolutionGrid):
            return NotImplemented
        return self.disc == other.disc and np.array_equal(self.values, other.values)

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def masses(self) -> np.ndarray:
        return self.disc.dx * self.values.sum(axis=1)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.disc.header() + "\n")
            for row in self.values:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> SolutionGrid:
        with open(path) as fh:
            header = fh.readline()
            meta = _parse_header(header)
            rows = [list(map(float, line.split(","))) for line in fh if line.strip()]
        disc = Discretization(
            meta["dx"], meta["dt"], int(meta["n_cells"]), int(meta["n_steps"]), meta.get("x_origin", 0.0)
        )
        return cls(disc, np.array(rows).reshape(disc.n_steps + 1, disc.n_cells))


def _parse_header(line: str) -> dict[str, float]:
    if not line.startswith("#"):
        raise ValueError("grid CSV must start with a '# dx=... dt=...' header line")
    meta = {}
    for token in line[1:].split():
        key, _, val = token.partition("=")
        meta[key] = float(val)
    missing = {"dx", "dt", "n_cells", "n_steps"} - set(meta)
    if missing:
        raise ValueError(f"grid CSV header missing {sorted(missing)}")
    return meta


@dataclass
class BoundaryTrace:
    """Ghost-cell values for each timestep.

    ``left[n]`` holds the ghost cells left of the domain at step ``n`` ordered
    left to right (the last entry touches cell 0); ``right[n]`` likewise starts at
    the cell adjacent to the last interior cell.
    """

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        self.left = np.atleast_2d(np.asarray(self.left, dtype=float))
        self.right = np.atleast_2d(np.asarray(self.right, dtype=float))
        if self.left.shape != self.right.shape:
            raise ValueError("left and right traces must have the same shape")

    @property
    def n_steps(self) -> int:
        return self.left.shape[0]

    @property
    def width(self) -> int:
        return self.left.shape[1]

    def ghosts(self, n: int, width: int) -> tuple[np.ndarray, np.ndarray]:
        """Ghost cells for step ``n``; missing outer columns replicate the edge."""
        left, right = self.left[n], self.right[n]
        if width <= self.width:
            return left[self.width - width :], right[:width]
        pad = width - self.width
        return (
            np.concatenate([np.full(pad, left[0]), left]),
            np.concatenate([right, np.full(pad, right[-1])]),
        )

    def truncated(self, n_steps: int) -> BoundaryTrace:
        return BoundaryTrace(self.left[:n_steps], self.right[:n_steps])

    @classmethod
    def constant(cls, left: float, right: float, n_steps: int, width: int = 3) -> BoundaryTrace:
        return cls(np.full((n_steps, width), float(left)), np.full((n_steps, width), float(right)))

    @classmethod
    def from_edges(cls, grid: SolutionGrid) -> BoundaryTrace:
        """Replicate-edge trace taken from a measured grid's outermost columns."""
        v = grid.values[:-1]
        return cls(v[:, :1], v[:, -1:])

    def check_range(self, u_max: float, slack: float = 1e-12) -> None:
        for side in (self.left, self.right):
            if np.any(side < -slack) or np.any(side > u_max + slack):
                raise ValueError("boundary trace leaves [0, u_max]")

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# width={self.width} n_steps={self.n_steps}\n")
            for lrow, rrow in zip(self.left, self.right):
                fh.write(",".join(f"{v:.17g}" for v in (*lrow, *rrow)) + "\n")

    @classmethod
    def from_csv(cls, path) -> BoundaryTrace:
        with open(path) as fh:
            meta = _parse_kv(fh.readline())
            width = int(meta["width"])
            rows = np.array([list(map(float, line.split(","))) for line in fh if line.strip()])
        rows = rows.reshape(-1, 2 * width)
        return cls(rows[:, :width], rows[:, width:])


def _parse_kv(line: str) -> dict[str, float]:
    return {k: float(v) for k, _, v in (t.partition("=") for t in line.lstrip("#").split())}


def cell_average_project(ic: PiecewiseConstantIC, disc: Discretization, domain_left: float | None = None):
    """Exact cell averages of a piecewise-constant profile.

    Cells partially covered by two pieces receive the length-weighted mean.
    """
    left = disc.x_origin if domain_left is None else domain_left
    edges = left + disc.dx * np.arange(disc.n_cells + 1)
    if edges[0] < ic.breakpoints[0] - 1e-12 or edges[-1] > ic.breakpoints[-1] + 1e-12:
        raise ValueError("profile does not cover the projection window")
    bp = np.asarray(ic.breakpoints)
    vals = np.asarray(ic.values)
    lo_idx = np.clip(np.searchsorted(bp, edges[:-1], side="right") - 1, 0, len(vals) - 1)
    hi_idx = np.clip(np.searchsorted(bp, edges[1:], side="left") - 1, 0, len(vals) - 1)
    out = vals[lo_idx].copy()
    for j in np.nonzero(hi_idx > lo_idx)[0]:
        a, b = edges[j], edges[j + 1]
        k = np.arange(lo_idx[j], hi_idx[j] + 1)
        overlap = np.minimum(bp[k + 1], b) - np.maximum(bp[k], a)
        out[j] = np.dot(vals[k], overlap) / (b - a)
    return out


def total_mass(field_values, dx: float) -> float:
    return float(dx * np.sum(field_values))


def total_variation(field_values) -> float:
    return float(np.sum(np.abs(np.diff(np.asarray(field_values, dtype=float)))))


def mass_ledger(grid: SolutionGrid, boundary_flux: np.ndarray) -> np.ndarray:
    """Per-step mismatch between interior mass change and ``dt * (F_left - F_right)``.

    ``boundary_flux`` has shape (n_steps, 2) holding the interface fluxes used
    at the left and right domain edges.
    """
    dm = np.diff(grid.masses())
    inflow = grid.disc.dt * (boundary_flux[:, 0] - boundary_flux[:, 1])
    return dm - inflow
