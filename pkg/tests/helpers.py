"""Shared test utilities: tabulated two-point fluxes and small IC factories."""

from __future__ import annotations

import numpy as np

from conslaw.exact import PiecewiseConstantIC


class TabulatedFlux:
    """Bilinear interpolation of a flux table on a uniform [0, u_max]^2 grid.

    Quacks like a (2, 1)-stencil network so it can drive ``nfvm_step``.
    """

    stencil_a = 2
    stencil_b = 1
    ghost_width = 1

    def __init__(self, table, u_max: float = 1.0):
        self.table = np.asarray(table, dtype=float)
        self.u_max = u_max
        self.n = self.table.shape[0]
        self.h = u_max / (self.n - 1)

    @classmethod
    def from_function(cls, fn, n: int = 41, u_max: float = 1.0):
        u = np.linspace(0, u_max, n)
        ul, ur = np.meshgrid(u, u, indexing="ij")
        return cls(fn(ul, ur), u_max)

    @classmethod
    def random(cls, rng, n: int = 11, scale: float = 1.0, u_max: float = 1.0):
        return cls(scale * rng.standard_normal((n, n)), u_max)

    def __call__(self, ul, ur):
        ul = np.clip(np.asarray(ul, float) / self.h, 0, self.n - 1)
        ur = np.clip(np.asarray(ur, float) / self.h, 0, self.n - 1)
        i = np.minimum(np.floor(ul).astype(int), self.n - 2)
        j = np.minimum(np.floor(ur).astype(int), self.n - 2)
        a, b = ul - i, ur - j
        T = self.table
        return ((1 - a) * (1 - b) * T[i, j] + a * (1 - b) * T[i + 1, j]
                + (1 - a) * b * T[i, j + 1] + a * b * T[i + 1, j + 1])

    def forward(self, windows):
        w = np.asarray(windows, dtype=float)
        return self(w[..., 0], w[..., 1])

    def lipschitz_inf(self) -> float:
        """Lipschitz constant with respect to the max-norm of the input pair."""
        dl = np.abs(np.diff(self.table, axis=0)) / self.h
        dr = np.abs(np.diff(self.table, axis=1)) / self.h
        return float(dl.max() + dr.max())

    def sup_diff(self, other: TabulatedFlux) -> float:
        return float(np.max(np.abs(self.table - other.table)))


def random_ic(rng, n_pieces: int = 5, lo: float = 0.0, hi: float = 1.0, u_max: float = 1.0):
    bps = np.linspace(lo, hi, n_pieces + 1)
    return PiecewiseConstantIC(bps, rng.uniform(0, u_max, n_pieces))


ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    """Log one acceptance verdict; printed again in the terminal summary."""
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
