"""Linearly-implicit IMEX time stepping and the per-step discrete energy balance.

One step solves

    (I - dt * a(l(u)) * Lap_h) u_next = u + dt * (f(u) + h(t + dt))

with the nonlocal coefficient frozen at the current state.  Taking the
discrete product of this system with ``u_next`` gives an exact per-step
energy identity, which :func:`energy_residual` evaluates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BlowUp
from .grid import Field, Grid1D, shifted_laplacian_solve
from .model import ProblemSpec

DEFAULT_CEILING = 1e8
DEFAULT_RETRIES = 6

__all__ = [
    "Trajectory",
    "EnsembleResult",
    "imex_step",
    "energy_residual",
    "integrate",
    "evolve_ensemble",
    "step_times",
]


def _rows(U: np.ndarray) -> np.ndarray:
    return U if U.ndim == 2 else U[None, :]


def _l2sq(grid: Grid1D, U: np.ndarray) -> np.ndarray:
    return grid.h * np.einsum("ij,ij->i", U, U)


def _h10sq(grid: Grid1D, U: np.ndarray) -> np.ndarray:
    pad = np.zeros((U.shape[0], 1))
    d = np.diff(np.hstack([pad, U, pad]), axis=1) / grid.h
    return grid.h * np.einsum("ij,ij->i", d, d)


def _viscosity(spec: ProblemSpec, grid: Grid1D, U: np.ndarray) -> np.ndarray:
    g = spec.weight.sample(grid)
    ell = grid.h * (U @ g)
    return np.asarray(spec.viscosity(ell), dtype=float).reshape(U.shape[0])


def _step(spec: ProblemSpec, grid: Grid1D, U: np.ndarray, t: float, dt: float):
    a = _viscosity(spec, grid, U)
    fU = np.asarray(spec.reaction(U))
    h = spec.forcing.sample(grid, t + dt)
    rhs = U + dt * (fU + h)
    return shifted_laplacian_solve(grid, rhs, dt * a), a, fU, h


def _residual(grid: Grid1D, U, Un, a, fU, h, dt) -> np.ndarray:
    hx = grid.h
    D = Un - U
    kinetic = 0.5 * (_l2sq(grid, Un) - _l2sq(grid, U) + _l2sq(grid, D))
    work = dt * hx * (np.einsum("ij,ij->i", fU, Un) + Un @ h)
    return kinetic + dt * a * _h10sq(grid, Un) - work


def imex_step(spec: ProblemSpec, u: Field, t: float, dt: float, ceiling: float = DEFAULT_CEILING) -> Field:
    """Advance ``u`` from ``t`` to ``t + dt``; raises :class:`BlowUp` past ``ceiling``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    Un, _, _, _ = _step(spec, u.grid, _rows(u.values), t, dt)
    nrm = math.sqrt(float(_l2sq(u.grid, Un)[0]))
    if not (nrm <= ceiling):
        raise BlowUp(f"|u| = {nrm:.3g} exceeds ceiling {ceiling:.3g} at t = {t + dt:.6g}", step=0, dt=dt)
    return Field(u.grid, Un[0])


def energy_residual(spec: ProblemSpec, u: Field, u_next: Field, t: float, dt: float) -> float:
    """``1/2(|u+|^2 - |u|^2 + |u+ - u|^2) + dt a ||u+||^2 - dt (f(u), u+) - dt (h(t+dt), u+)``."""
    grid = u.grid
    U, Un = _rows(u.values), _rows(u_next.values)
    a = _viscosity(spec, grid, U)
    fU = np.asarray(spec.reaction(U))
    h = spec.forcing.sample(grid, t + dt)
    return float(_residual(grid, U, Un, a, fU, h, dt)[0])


def step_times(tau: float, t_end: float, dt: float) -> np.ndarray:
    """``tau, tau + dt, ...`` ending exactly at ``t_end`` (the last step may be shorter)."""
    if not t_end > tau:
        raise ValueError(f"t_end = {t_end} must exceed tau = {tau}")
    K = max(1, math.ceil((t_end - tau) / dt - 1e-9))
    times = tau + dt * np.arange(K + 1, dtype=float)
    times[-1] = t_end
    return times


@dataclass
class Trajectory:
    spec: ProblemSpec
    grid: Grid1D
    times: np.ndarray
    l2: np.ndarray
    h10: np.ndarray
    viscosity: np.ndarray  # a(l(u^k)) used in step k -> k+1; last entry repeats
    residual: np.ndarray  # energy residual of step k -> k+1 (len K)
    relative_residual: np.ndarray
    dt: float
    retries: int = 0
    fields: np.ndarray | None = None
    snapshots: dict = field(default_factory=dict)

    @property
    def final(self) -> Field:
        if self.fields is not None:
            return Field(self.grid, self.fields[-1])
        return self.snapshots[float(self.times[-1])]

    def field_at(self, k: int) -> Field:
        if self.fields is None:
            raise ValueError("trajectory was integrated without keep_fields")
        return Field(self.grid, self.fields[k])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "l2", "h10", "viscosity", "residual"])
            res = np.append(self.residual, np.nan)
            for row in zip(self.times, self.l2, self.h10, self.viscosity, res):
                w.writerow([f"{v:.17g}" for v in row])


def _run(spec, grid, U, times, ceiling, on_step):
    for k in range(len(times) - 1):
        t, dt = times[k], times[k + 1] - times[k]
        Un, a, fU, h = _step(spec, grid, U, t, dt)
        l2 = _l2sq(grid, Un)
        if not np.all(l2 <= ceiling * ceiling):
            raise BlowUp(f"discrete L2 norm exceeded {ceiling:.3g} at t = {times[k + 1]:.6g}", step=k, dt=dt)
        if on_step is not None:
            on_step(k, U, Un, a, fU, h, dt)
        U = Un
    return U


def integrate(
    spec: ProblemSpec,
    u_tau: Field,
    tau: float,
    t_end: float,
    dt: float,
    *,
    ceiling: float = DEFAULT_CEILING,
    max_retries: int = DEFAULT_RETRIES,
    keep_fields: bool = True,
    snapshot_times=(),
    observer: Callable[[float, Field], None] | None = None,
) -> Trajectory:
    """Repeated :func:`imex_step` from ``(tau, u_tau)`` to ``t_end``.

    On :class:`BlowUp` the whole run restarts with ``dt / 2``, at most
    ``max_retries`` times; the last failure propagates.
    """
    for attempt in range(max_retries + 1):
        try:
            return _integrate_once(spec, u_tau, tau, t_end, dt, ceiling, keep_fields, snapshot_times, observer, attempt)
        except BlowUp as exc:
            if attempt == max_retries:
                raise BlowUp(f"{exc} (after {attempt} step halvings)", step=exc.step, dt=exc.dt) from exc
            dt = dt / 2.0
    raise AssertionError("unreachable")  # pragma: no cover


def _integrate_once(spec, u_tau, tau, t_end, dt, ceiling, keep_fields, snapshot_times, observer, retries):
    grid = u_tau.grid
    times = step_times(tau, t_end, dt)
    K = len(times) - 1
    l2 = np.empty(K + 1)
    h10 = np.empty(K + 1)
    visc = np.empty(K + 1)
    res = np.empty(K)
    rel = np.empty(K)
    fields = np.empty((K + 1, grid.n)) if keep_fields else None
    wanted = sorted(float(s) for s in snapshot_times)
    snaps = {}

    U0 = _rows(u_tau.values).copy()
    l2[0] = math.sqrt(_l2sq(grid, U0)[0])
    h10[0] = math.sqrt(_h10sq(grid, U0)[0])
    if fields is not None:
        fields[0] = U0[0]
    if observer is not None:
        observer(float(times[0]), u_tau)

    def on_step(k, U, Un, a, fU, h, dt_k):
        r = _residual(grid, U, Un, a, fU, h, dt_k)[0]
        res[k] = r
        rel[k] = abs(r) / max(1.0, l2[k] ** 2)
        visc[k] = a[0]
        l2[k + 1] = math.sqrt(_l2sq(grid, Un)[0])
        h10[k + 1] = math.sqrt(_h10sq(grid, Un)[0])
        if fields is not None:
            fields[k + 1] = Un[0]
        t_next = float(times[k + 1])
        if observer is not None:
            observer(t_next, Field(grid, Un[0]))
        while wanted and wanted[0] <= t_next + 1e-12:
            snaps[wanted.pop(0)] = Field(grid, Un[0])

    U = _run(spec, grid, U0, times, ceiling, on_step)
    visc[K] = _viscosity(spec, grid, U)[0]
    if fields is None:
        snaps[float(times[-1])] = Field(grid, U[0])
    return Trajectory(spec, grid, times, l2, h10, visc, res, rel, dt, retries, fields, snaps)


@dataclass
class EnsembleResult:
    values: np.ndarray  # (M, n) endpoint states
    dt: float
    max_relative_residual: float
    retries: int


def evolve_ensemble(
    spec: ProblemSpec,
    grid: Grid1D,
    U0: np.ndarray,
    tau: float,
    t_end: float,
    dt: float,
    *,
    ceiling: float = DEFAULT_CEILING,
    max_retries: int = DEFAULT_RETRIES,
    audit_energy: bool = True,
) -> EnsembleResult:
    """Evolve every row of ``U0`` independently from ``tau`` to ``t_end``.

    Each member uses its own frozen coefficient ``a(l(u))``; the implicit
    solves of all members share one batched transform per step.
    """
    U0 = _rows(np.asarray(U0, dtype=float))
    for attempt in range(max_retries + 1):
        worst = [0.0]

        def on_step(k, U, Un, a, fU, h, dt_k):
            r = np.abs(_residual(grid, U, Un, a, fU, h, dt_k))
            worst[0] = max(worst[0], float(np.max(r / np.maximum(1.0, _l2sq(grid, U)))))

        try:
            times = step_times(tau, t_end, dt)
            U = _run(spec, grid, U0.copy(), times, ceiling, on_step if audit_energy else None)
            return EnsembleResult(U, dt, worst[0], attempt)
        except BlowUp as exc:
            if attempt == max_retries:
                raise BlowUp(f"{exc} (after {attempt} step halvings)", step=exc.step, dt=exc.dt) from exc
            dt = dt / 2.0
    raise AssertionError("unreachable")  # pragma: no cover
