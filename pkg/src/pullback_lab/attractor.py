"""Omega-limit clouds, Hausdorff semidistances, and the two convergence experiments.

Attractor sections are approximated by successive-cloud stabilisation: an
initial cloud sampled from the ball of radius ``R(tau_k)`` is evolved from
``tau_k`` to ``t`` for a decreasing sequence of pullback times, and the
procedure stops once two consecutive endpoint clouds agree in both
semidistance directions.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import norm as _normal
from scipy.stats import qmc

from .conditions import check_A2, check_A3, check_A4, check_A5, mu_limits, sufficient_condition_report
from .errors import GridMismatch, NoStabilization
from .estimates import envelope_constant, family_radius, psi_envelope
from .grid import Field, Grid1D, first_eigenvalue
from .model import PerturbedFamily, ProblemSpec, check_A1
from .solver import DEFAULT_CEILING, DEFAULT_RETRIES, evolve_ensemble, integrate
from .verdict import FAIL, INCONCLUSIVE, PASS, is_nonincreasing

__all__ = [
    "AttractorCloud",
    "RobustnessReport",
    "FiniteTimeReport",
    "sample_initial_cloud",
    "hausdorff_semidist",
    "default_schedule",
    "omega_limit",
    "probe_set",
    "robustness_experiment",
    "finite_time_convergence_experiment",
]


def _fmt(v) -> str:
    return f"{v:.17g}" if isinstance(v, float) else str(v)


def sample_initial_cloud(grid: Grid1D, radius: float, n_modes: int = 8, n_points: int = 64, seed: int = 0) -> np.ndarray:
    """``n_points`` states on the sphere of ``radius`` in the span of the first sine modes, plus zero.

    Coefficients come from a scrambled Halton sequence pushed through the
    normal quantile function, which after normalisation gives well-spread
    directions.  Row 0 is the zero field; the result has ``n_points + 1`` rows.
    """
    if not radius >= 0:
        raise ValueError(f"radius must be nonnegative, got {radius}")
    if n_points < 1:
        raise ValueError("n_points must be at least 1")
    n_modes = max(1, min(n_modes, grid.n))
    k = np.arange(1, n_modes + 1)
    basis = math.sqrt(2.0 / grid.L) * np.sin(np.outer(k, grid.nodes) * math.pi / grid.L)
    if n_modes == 1:
        coef = np.ones((n_points, 1))
        coef[1::2] = -1.0
    else:
        u = qmc.Halton(d=n_modes, scramble=True, seed=seed).random(n_points)
        coef = _normal.ppf(np.clip(u, 1e-12, 1.0 - 1e-12))
    coef /= np.linalg.norm(coef, axis=1, keepdims=True)
    pts = radius * (coef @ basis)
    # the discrete sine basis is orthonormal, so |pts_i| = radius up to rounding
    lengths = np.sqrt(grid.h * np.einsum("ij,ij->i", pts, pts))
    over = lengths > radius
    if np.any(over):
        pts[over] *= (radius / lengths[over])[:, None]
    return np.vstack([np.zeros(grid.n), pts])


def _as_array(cloud) -> tuple[np.ndarray, Grid1D | None]:
    if isinstance(cloud, AttractorCloud):
        return cloud.values, cloud.grid
    if isinstance(cloud, (list, tuple)) and cloud and isinstance(cloud[0], Field):
        grid = cloud[0].grid
        for f in cloud[1:]:
            if f.grid != grid:
                raise GridMismatch("cloud mixes fields from different grids")
        return np.vstack([f.values for f in cloud]), grid
    return np.atleast_2d(np.asarray(cloud, dtype=float)), None


def hausdorff_semidist(A, B, grid: Grid1D | None = None) -> float:
    """``max_{a in A} min_{b in B} |a - b|`` in the discrete L2 norm."""
    a, ga = _as_array(A)
    b, gb = _as_array(B)
    if ga is not None and gb is not None and ga != gb:
        raise GridMismatch(f"clouds live on {ga} and {gb}")
    grid = grid or ga or gb
    if grid is None:
        raise ValueError("a grid is needed to measure raw arrays")
    if a.shape[1] != grid.n or b.shape[1] != grid.n:
        raise GridMismatch("cloud width does not match the grid")
    return float(cdist(a, b).min(axis=1).max() * math.sqrt(grid.h))


@dataclass
class AttractorCloud:
    t: float
    values: np.ndarray
    grid: Grid1D
    provenance: dict = field(default_factory=dict)
    metric: float = math.nan

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[0] == 0:
            raise ValueError("an attractor cloud cannot be empty")
        if self.values.shape[1] != self.grid.n:
            raise GridMismatch("cloud width does not match the grid")

    def __len__(self) -> int:
        return self.values.shape[0]

    def fields(self) -> list[Field]:
        return [Field(self.grid, row) for row in self.values]

    def norms(self) -> np.ndarray:
        return np.sqrt(self.grid.h * np.einsum("ij,ij->i", self.values, self.values))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# t={_fmt(float(self.t))}\n# L={_fmt(self.grid.L)}\n# n={self.grid.n}\n# metric={_fmt(float(self.metric))}\n")
        for k, v in self.provenance.items():
            buf.write(f"# {k}={_fmt(v) if not isinstance(v, (list, tuple)) else ' '.join(_fmt(x) for x in v)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(self.grid.n)])
        for row in self.values:
            w.writerow([f"{v:.17g}" for v in row])
        return buf.getvalue()


def default_schedule(t: float, m: float, lam1: float, n_steps: int = 12) -> list[float]:
    """``tau_k = t - k * T_step`` with ``T_step = 5 / (m lam1)``."""
    step = 5.0 / (m * lam1)
    return [t - k * step for k in range(1, n_steps + 1)]


def omega_limit(
    spec: ProblemSpec,
    grid: Grid1D,
    radius_fn: Callable[[float], float],
    t: float,
    schedule: Sequence[float] | None = None,
    dt: float = 1e-3,
    cloud_size: int = 33,
    tol: float = 1e-6,
    *,
    n_modes: int = 8,
    seed: int = 0,
    ceiling: float = DEFAULT_CEILING,
    max_retries: int = DEFAULT_RETRIES,
) -> AttractorCloud:
    """Approximate the attractor section at ``t`` by pullback stabilisation.

    ``cloud_size`` counts the zero field.  Raises :class:`NoStabilization`
    with the last metric when the schedule runs out first.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if cloud_size < 2:
        raise ValueError("cloud_size must be at least 2")
    taus = default_schedule(t, spec.m, first_eigenvalue(grid)) if schedule is None else [float(s) for s in schedule]
    if not taus or taus[0] >= t or any(b >= a for a, b in zip(taus, taus[1:])):
        raise ValueError("pullback schedule must decrease strictly below t")
    prev = None
    metric = math.inf
    used = []
    dts = []
    for tau in taus:
        cloud0 = sample_initial_cloud(grid, radius_fn(tau), n_modes, cloud_size - 1, seed)
        res = evolve_ensemble(spec, grid, cloud0, tau, t, dt, ceiling=ceiling, max_retries=max_retries)
        used.append(tau)
        dts.append(res.dt)
        cur = res.values
        if prev is not None:
            metric = max(hausdorff_semidist(prev, cur, grid), hausdorff_semidist(cur, prev, grid))
            if metric < tol:
                prov = {
                    "pullback_times": tuple(used),
                    "dt": tuple(dts),
                    "cloud_size": cloud_size,
                    "n_modes": n_modes,
                    "seed": seed,
                    "initial_set": "zero plus scrambled-Halton sphere in the first sine modes",
                    "tol": tol,
                }
                return AttractorCloud(t, cur, grid, prov, metric)
        prev = cur
    raise NoStabilization(f"clouds did not stabilise to {tol:.3g} over {len(taus)} pullback times (last {metric:.3g})", metric)


# ---------------------------------------------------------------------------


def probe_set(family: PerturbedFamily, n: int = 16) -> list[float]:
    """The eta schedule continued by halving until it has ``n`` entries."""
    probes = list(family.eta_schedule)
    while len(probes) < n:
        probes.append(probes[-1] / 2.0)
    return probes


@dataclass
class RobustnessReport:
    t: float
    schedule: tuple
    distances: list  # d(eta); nan where the cloud did not stabilise
    status: list  # pass / inconclusive per eta
    radii_sq: dict  # eta -> R_eta(t)^2 ; key 0.0 -> Psi^2 at t
    metrics: list
    tol: float
    gates: list = field(default_factory=list)  # ConditionVerdicts
    gates_overridden: bool = False
    envelope_rows: list = field(default_factory=list)
    ball_universe: dict = field(default_factory=dict)
    limit_cloud: AttractorCloud | None = None
    clouds: dict = field(default_factory=dict)
    verdict: str = FAIL
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eta", "d", "R_sq_at_t", "stabilization_metric", "status"])
        for eta, d, st, mt in zip(self.schedule, self.distances, self.status, self.metrics):
            w.writerow([_fmt(float(eta)), _fmt(float(d)), _fmt(float(self.radii_sq.get(eta, math.nan))), _fmt(float(mt)), st])
        return buf.getvalue()

    def report(self) -> str:
        lines = [f"[{self.verdict.upper()}] robustness at t = {self.t:g}"]
        if self.gates_overridden:
            lines.append("  preconditions overridden by caller")
        for g in self.gates:
            lines.append(f"  gate {g.assumption}: {g.verdict}")
        for n in self.notes:
            lines.append(f"  note: {n}")
        for eta, d, st in zip(self.schedule, self.distances, self.status):
            lines.append(f"  eta = {eta:.6g}  d = {d:.6g}  ({st})")
        for k, v in self.ball_universe.items():
            lines.append(f"  {k} = {v:.6g}")
        return "\n".join(lines)


def _gates(family: PerturbedFamily, probes, tol):
    gates = [check_A1(family.spec_at(e)) for e in probes[:4]] + [check_A1(family.limit_spec)]
    worst_a1 = next((g for g in gates if not g.passed), gates[-1])
    out = [worst_a1, check_A2(family, eta_probes=probes), check_A3(family, eta_probes=probes, tol=tol)]
    out.append(check_A4(family, "strong-dual", tol=tol, eta_probes=probes))
    if family.mu0 is not None:
        out.append(check_A5(family, family.mu0, eta_probes=probes, tol=tol))
    else:
        suff = sufficient_condition_report(family, eta_probes=probes, tol=tol)
        out.append(check_A5(family, suff.details["recommended_mu0"], eta_probes=probes, tol=tol))
    return out


def robustness_experiment(
    family: PerturbedFamily,
    t: float = 0.0,
    eta_schedule: Sequence[float] | None = None,
    *,
    dt: float = 2e-3,
    cloud_size: int = 33,
    tol: float = 1e-6,
    n_modes: int = 8,
    seed: int = 0,
    n_pullback: int = 12,
    decay_factor: float = 0.05,
    gate_tol: float = 1e-3,
    override_gates: bool = False,
    fixed_ball_radius: float = 1.0,
) -> RobustnessReport:
    """Semidistances ``d(eta) = dist(A_eta(t), A_0(t))`` along the schedule.

    The limit section uses the envelope ``Psi_{c0}`` as its ball radius,
    each member its own absorbing radius.  Passes when ``d`` is
    nonincreasing over the last half of the schedule and
    ``d(eta_min) <= decay_factor * max(d(eta_max), tol)``.
    """
    schedule = tuple(float(e) for e in (family.eta_schedule if eta_schedule is None else eta_schedule))
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("eta schedule must be decreasing")
    probes = probe_set(family)
    gates = _gates(family, probes, gate_tol)
    report = RobustnessReport(t, schedule, [], [], {}, [], tol, gates=gates, gates_overridden=override_gates)
    if not all(g.passed for g in gates) and not override_gates:
        failed = [g.assumption for g in gates if not g.passed]
        report.notes.append("failed preconditions: " + ", ".join(failed))
        report.distances = [math.nan] * len(schedule)
        report.status = [INCONCLUSIVE] * len(schedule)
        report.metrics = [math.nan] * len(schedule)
        return report

    grid = family.grid
    mu_lower = mu_limits(family, probes)[0].lower if len(probes) >= 8 else min(family.mu_at(e) for e in probes)
    c0 = envelope_constant(family, mu_lower)

    def psi(tau):
        return math.sqrt(psi_envelope(family, c0, tau, probes))

    def pull(spec, radius_fn):
        sched = default_schedule(t, family.m, family.lam1, n_pullback)
        return omega_limit(spec, grid, radius_fn, t, sched, dt, cloud_size, tol, n_modes=n_modes, seed=seed)

    limit_cloud = pull(family.limit_spec, psi)
    ball_cloud = pull(family.limit_spec, lambda tau: fixed_ball_radius)
    report.limit_cloud = limit_cloud
    report.radii_sq[0.0] = psi(t) ** 2
    report.ball_universe = {
        "dist(fixed-ball cloud, envelope cloud)": hausdorff_semidist(ball_cloud, limit_cloud),
        "dist(envelope cloud, fixed-ball cloud)": hausdorff_semidist(limit_cloud, ball_cloud),
    }

    taus = limit_cloud.provenance["pullback_times"]
    tail = schedule[len(schedule) // 2 :]
    for eta in tail:
        R = family_radius(family, eta)
        for tau in taus:
            report.envelope_rows.append(
                {"eta": eta, "tau": tau, "R_sq": R.squared(tau), "Psi_sq": psi(tau) ** 2, "holds": R.squared(tau) <= psi(tau) ** 2}
            )
    if not all(r["holds"] for r in report.envelope_rows):
        report.notes.append("envelope property fails for some probed eta in the schedule tail")

    for eta in schedule:
        R = family_radius(family, eta)
        report.radii_sq[eta] = R.squared(t)
        try:
            cloud = pull(family.spec_at(eta), R)
        except NoStabilization as exc:
            report.distances.append(math.nan)
            report.metrics.append(exc.metric)
            report.status.append(INCONCLUSIVE)
            continue
        report.clouds[eta] = cloud
        report.distances.append(hausdorff_semidist(cloud, limit_cloud))
        report.metrics.append(cloud.metric)
        report.status.append(PASS)

    d = report.distances
    if INCONCLUSIVE in report.status:
        report.verdict = INCONCLUSIVE
    else:
        tail_d = d[len(d) // 2 :]
        decays = d[-1] <= decay_factor * max(d[0], tol)
        report.verdict = PASS if (is_nonincreasing(tail_d) and decays) else FAIL
        report.notes.append(
            f"d(eta_min) = {d[-1]:.6g}, threshold {decay_factor:g} * max(d(eta_max), tol) = {decay_factor * max(d[0], tol):.6g}"
        )
    return report


# ---------------------------------------------------------------------------


@dataclass
class FiniteTimeReport:
    schedule: tuple
    checkpoints: tuple
    errors: list  # e(eta)
    norm_table: list  # rows: eta, t, | |u_eta|^2 - |u_0|^2 |
    slope: float
    dt_error: float
    verdict: str
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eta", "t", "norm_sq_gap"])
        for r in self.norm_table:
            w.writerow([_fmt(r["eta"]), _fmt(r["t"]), _fmt(r["norm_sq_gap"])])
        return buf.getvalue()

    def errors_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eta", "e"])
        for eta, e in zip(self.schedule, self.errors):
            w.writerow([_fmt(float(eta)), _fmt(float(e))])
        return buf.getvalue()

    def norm_gaps_decrease(self) -> bool:
        for s in self.checkpoints:
            col = [r["norm_sq_gap"] for r in self.norm_table if r["t"] == s]
            if not all(b < a or a == b == 0.0 for a, b in zip(col, col[1:])):
                return False
        return True


def _checkpoint_states(spec, u_tau, tau, checkpoints, dt):
    traj = integrate(spec, u_tau, tau, checkpoints[-1], dt, keep_fields=False, snapshot_times=checkpoints)
    return [traj.snapshots[s].values for s in checkpoints], traj.dt


def finite_time_convergence_experiment(
    family: PerturbedFamily,
    tau: float,
    u_tau: Field,
    t_checkpoints: Sequence[float],
    eta_schedule: Sequence[float] | None = None,
    dt: float = 1e-3,
) -> FiniteTimeReport:
    """``e(eta) = max_t |u_eta(t) - u_0(t)|`` from a shared datum, plus the norm-gap table.

    The time-step error is estimated by rerunning the largest eta with
    ``dt / 2``.  Passes when ``e`` strictly decreases along the schedule.
    """
    cps = tuple(float(s) for s in t_checkpoints)
    if not cps or any(not (tau < s) for s in cps) or any(b <= a for a, b in zip(cps, cps[1:])):
        raise ValueError("checkpoints must be increasing and lie after tau")
    schedule = tuple(float(e) for e in (family.eta_schedule if eta_schedule is None else eta_schedule))
    grid = u_tau.grid
    ref, _ = _checkpoint_states(family.limit_spec, u_tau, tau, cps, dt)
    ref_sq = [grid.h * float(v @ v) for v in ref]
    errors, table = [], []
    for eta in schedule:
        states, _ = _checkpoint_states(family.spec_at(eta), u_tau, tau, cps, dt)
        errors.append(max(math.sqrt(grid.h * float((a - b) @ (a - b))) for a, b in zip(states, ref)))
        for s, v, r2 in zip(cps, states, ref_sq):
            table.append({"eta": eta, "t": s, "norm_sq_gap": abs(grid.h * float(v @ v) - r2)})

    coarse, _ = _checkpoint_states(family.spec_at(schedule[0]), u_tau, tau, cps, dt)
    fine, _ = _checkpoint_states(family.spec_at(schedule[0]), u_tau, tau, cps, dt / 2.0)
    dt_error = max(math.sqrt(grid.h * float((a - b) @ (a - b))) for a, b in zip(coarse, fine))

    positive = [(e, x) for e, x in zip(schedule, errors) if x > 0]
    if len(positive) >= 2:
        slope = float(np.polyfit(np.log([p[0] for p in positive]), np.log([p[1] for p in positive]), 1)[0])
    else:
        slope = math.nan
    decreasing = all(b < a for a, b in zip(errors, errors[1:])) or all(e == 0.0 for e in errors)
    rep = FiniteTimeReport(schedule, cps, errors, table, slope, dt_error, PASS if decreasing else FAIL)
    rep.notes.append(f"observed log-log slope {slope:.4g}; dt error estimate {dt_error:.3g} vs e(eta_max) {errors[0]:.3g}")
    return rep
