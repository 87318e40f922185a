"""Uniform 1D Dirichlet grid, discrete operators and the norms used by the estimates.

All spatial integrals use the interior rectangle rule (weight ``h`` per
interior node), which keeps the summation-by-parts identity
``(-Lap_h u, u)_h = ||u||^2`` exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy import fft
from scipy.linalg import solve_banded

from .errors import GridMismatch, SolverFailure

__all__ = [
    "Grid1D",
    "Field",
    "Norms",
    "laplacian_apply",
    "first_eigenvalue",
    "laplacian_eigenvalues",
    "norms",
    "inner",
    "dual_norm",
    "dual_inner",
    "nonlocal_value",
    "sine_mode",
    "shifted_laplacian_solve",
    "write_field_csv",
    "read_field_csv",
]


@dataclass(frozen=True)
class Grid1D:
    """Interior nodes ``x_i = i*h``, ``i = 1..n``, of ``(0, L)`` with ``h = L/(n+1)``."""

    L: float
    n: int

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError(f"domain length must be positive, got {self.L}")
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"need at least 3 interior nodes, got {self.n}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return self.L / (self.n + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        x = np.arange(1, self.n + 1) * self.h
        x.flags.writeable = False
        return x

    @property
    def measure(self) -> float:
        return self.L

    def refine(self) -> "Grid1D":
        """Halve the spacing: ``n -> 2n + 1``."""
        return Grid1D(self.L, 2 * self.n + 1)

    def field(self, values) -> "Field":
        return Field(self, values)

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.n))


@dataclass(frozen=True, eq=False)
class Field:
    """Interior values of a grid function; boundary values are identically zero."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise GridMismatch(f"field has shape {v.shape}, grid expects ({self.grid.n},)")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __eq__(self, other):
        if not isinstance(other, Field):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    __hash__ = None

    def __add__(self, other: "Field") -> "Field":
        _same_grid(self.grid, other.grid)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _same_grid(self.grid, other.grid)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "Field":
        return Field(self.grid, c * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)


class Norms(NamedTuple):
    l2: float
    h10: float
    lp: float | None


def _same_grid(a: Grid1D, b: Grid1D) -> None:
    if a != b:
        raise GridMismatch(f"grid mismatch: {a} vs {b}")


def _values(u) -> np.ndarray:
    return u.values if isinstance(u, Field) else np.asarray(u, dtype=float)


def sine_mode(grid: Grid1D, k: int, amplitude: float = 1.0) -> Field:
    """``amplitude * sin(k pi x / L)`` sampled on the interior nodes."""
    return Field(grid, amplitude * np.sin(k * np.pi * grid.nodes / grid.L))


def laplacian_apply(u: Field) -> Field:
    """Three-point Dirichlet Laplacian ``(u[i-1] - 2u[i] + u[i+1]) / h^2``."""
    v = u.values
    padded = np.concatenate(([0.0], v, [0.0]))
    out = (padded[:-2] - 2.0 * v + padded[2:]) / u.grid.h**2
    return Field(u.grid, out)


def laplacian_eigenvalues(grid: Grid1D) -> np.ndarray:
    """Eigenvalues of ``-Lap_h`` ordered by mode number ``k = 1..n``."""
    k = np.arange(1, grid.n + 1)
    return (4.0 / grid.h**2) * np.sin(k * np.pi * grid.h / (2.0 * grid.L)) ** 2


def first_eigenvalue(grid: Grid1D, mode: str = "discrete") -> float:
    if mode == "continuous":
        return (math.pi / grid.L) ** 2
    if mode == "discrete":
        return (4.0 / grid.h**2) * math.sin(math.pi * grid.h / (2.0 * grid.L)) ** 2
    raise ValueError(f"mode must be 'continuous' or 'discrete', got {mode!r}")


def inner(u, v, grid: Grid1D | None = None) -> float:
    """Discrete L2 product ``h * sum(u_i v_i)``."""
    if isinstance(u, Field) and isinstance(v, Field):
        _same_grid(u.grid, v.grid)
    g = grid or (u.grid if isinstance(u, Field) else v.grid)
    return g.h * float(np.dot(_values(u), _values(v)))


def norms(u: Field, p: float | None = None) -> Norms:
    """L2 norm, H^1_0 seminorm and (optionally) L^p norm of a field."""
    h = u.grid.h
    v = u.values
    l2 = math.sqrt(h * float(np.dot(v, v)))
    d = np.diff(np.concatenate(([0.0], v, [0.0]))) / h
    h10 = math.sqrt(h * float(np.dot(d, d)))
    lp = None
    if p is not None:
        lp = (h * float(np.sum(np.abs(v) ** p))) ** (1.0 / p)
    return Norms(l2, h10, lp)


def _neg_laplacian_banded(grid: Grid1D) -> np.ndarray:
    n, h2 = grid.n, grid.h**2
    ab = np.empty((3, n))
    ab[0, :] = -1.0 / h2
    ab[1, :] = 2.0 / h2
    ab[2, :] = -1.0 / h2
    return ab


def _solve_poisson(f: Field) -> np.ndarray:
    try:
        w = solve_banded((1, 1), _neg_laplacian_banded(f.grid), f.values)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverFailure(f"tridiagonal Dirichlet solve failed: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise SolverFailure("tridiagonal Dirichlet solve returned non-finite values")
    return w


def dual_inner(f: Field, g: Field) -> float:
    """H^-1 product ``(f, (-Lap_h)^{-1} g)_h``."""
    _same_grid(f.grid, g.grid)
    return inner(f, _solve_poisson(g), f.grid)


def dual_norm(f: Field) -> float:
    """Discrete H^-1 norm: solve ``-Lap_h w = f`` and return ``sqrt((f, w)_h)``."""
    w = _solve_poisson(f)
    return math.sqrt(max(inner(f.values, w, f.grid), 0.0))


def nonlocal_value(weight, u: Field) -> float:
    """``l(u) = (g_l, u)_h`` for a weight descriptor or a pre-sampled weight field."""
    if isinstance(weight, Field):
        _same_grid(weight.grid, u.grid)
        g = weight.values
    else:
        g = weight.sample(u.grid)
    return u.grid.h * float(np.dot(g, u.values))


def shifted_laplacian_solve(grid: Grid1D, rhs: np.ndarray, coef) -> np.ndarray:
    """Solve ``(I - coef * Lap_h) x = rhs`` row by row.

    ``rhs`` is ``(n,)`` or ``(M, n)``; ``coef`` is a scalar or one value per
    row.  The Dirichlet matrix is diagonalised exactly by the orthonormal
    DST-I, so one transform pair replaces a batch of tridiagonal solves.
    """
    rhs = np.asarray(rhs, dtype=float)
    lam = laplacian_eigenvalues(grid)
    coef = np.asarray(coef, dtype=float)
    if rhs.ndim == 2:
        coef = np.broadcast_to(coef, (rhs.shape[0],))[:, None]
    denom = 1.0 + coef * lam
    if np.any(denom <= 0):
        raise SolverFailure("shifted Laplacian is not positive definite (negative diffusion)")
    spec = fft.dst(rhs, type=1, norm="ortho", axis=-1)
    return fft.dst(spec / denom, type=1, norm="ortho", axis=-1)


def write_field_csv(path, u: Field) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "u"])
        for x, val in zip(u.grid.nodes, u.values):
            w.writerow([f"{x:.17g}", f"{val:.17g}"])


def read_field_csv(path, L: float) -> Field:
    xs, us = [], []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        next(rows)
        for x, val in rows:
            xs.append(float(x))
            us.append(float(val))
    return Field(Grid1D(L, len(us)), np.array(us))
