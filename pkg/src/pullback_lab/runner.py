"""Experiment orchestration: one function per experiment name, each writing its
artifacts into a per-run directory and returning the acceptance gates it checked.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attractor import (
    default_schedule,
    finite_time_convergence_experiment,
    omega_limit,
    probe_set,
    robustness_experiment,
)
from .conditions import (
    check_A2,
    check_A3,
    check_A4,
    check_A5,
    mu_limits,
    noncommutation_demo,
    sufficient_condition_report,
)
from .config import RunConfig, build_family, emit_config, evaluate
from .estimates import (
    envelope_constant,
    family_radius,
    gronwall_bound,
    psi_envelope,
    tempered_membership,
)
from .grid import Field, Grid1D, first_eigenvalue
from .model import ConstantAmp, ForcingDesc, ForcingTerm, Profile, check_A1
from .solver import integrate

__all__ = ["Gate", "RunResult", "OUTPUT_ENV", "run_config", "initial_field", "heat_convergence"]

OUTPUT_ENV = "PULLBACK_LAB_OUTPUT"


@dataclass
class Gate:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class RunResult:
    experiment: str
    directory: Path
    gates: list[Gate] = field(default_factory=list)
    files: list[Path] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates)

    def summary(self, with_location: bool = True) -> str:
        where = f" ({self.directory})" if with_location else ""
        lines = [f"{self.experiment}: {'pass' if self.passed else 'fail'}{where}"]
        lines += [f"  [{'pass' if g.passed else 'FAIL'}] {g.name}: {g.detail}" for g in self.gates]
        return "\n".join(lines)


class _Out:
    def __init__(self, directory: Path):
        self.dir = directory
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []

    def write(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(text)
        self.files.append(path)
        return path

    def path(self, name: str) -> Path:
        path = self.dir / name
        self.files.append(path)
        return path


def _csv(header, rows) -> str:
    def fmt(v):
        return f"{v:.17g}" if isinstance(v, float) else str(v)

    lines = [",".join(header)] + [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def initial_field(cfg: RunConfig, grid: Grid1D) -> Field:
    value = evaluate(cfg.experiment["initial"], {"lam1": first_eigenvalue(grid)})
    if isinstance(value, Profile):
        value = ForcingDesc((ForcingTerm(value, ConstantAmp(1.0)),))
    if not isinstance(value, ForcingDesc):
        raise TypeError("initial must be a profile expression")
    return Field(grid, value.sample(grid, 0.0))


def _members(family):
    return list(family.eta_schedule) + [0.0]


def _mu_for(family, eta):
    if eta == 0.0 and family.mu0 is None:
        return family.m * family.lam1
    return family.mu_at(eta)


def _tag(eta: float) -> str:
    return "limit" if eta == 0.0 else f"eta={eta:.6g}"


# ---------------------------------------------------------------------------


def _energy_audit(cfg, family, out):
    grid = family.grid
    u0 = initial_field(cfg, grid)
    tol = cfg.experiment["energy_tol"]
    gates = []
    for eta in _members(family):
        traj = integrate(
            family.spec_at(eta), u0, cfg.time["tau"], cfg.time["t_end"], cfg.time["dt"],
            ceiling=cfg.time["ceiling"], max_retries=cfg.time["retries"], keep_fields=False,
        )
        traj.write_csv(out.path(f"trajectory_{_tag(eta)}.csv"))
        worst = float(np.max(traj.relative_residual))
        gates.append(Gate(f"energy identity {_tag(eta)}", worst < tol, f"max relative residual {worst:.3g} < {tol:.1g}"))
    return gates


def _gronwall(cfg, family, out):
    grid = family.grid
    u0 = initial_field(cfg, grid)
    tau, t_end = cfg.time["tau"], cfg.time["t_end"]
    gates = []
    for eta in _members(family):
        spec = family.spec_at(eta)
        mu = _mu_for(family, eta)
        traj = integrate(spec, u0, tau, t_end, cfg.time["dt"], ceiling=cfg.time["ceiling"], max_retries=cfg.time["retries"], keep_fields=False)
        u2 = traj.l2[0] ** 2
        rows, ok, worst = [], True, -math.inf
        for t, l2 in zip(traj.times, traj.l2):
            b = gronwall_bound(spec, grid, mu, u2, tau, float(t), lam1=family.lam1)
            slack = b + 1e-8 * (1.0 + b) - l2 * l2
            ok &= slack >= 0
            worst = max(worst, l2 * l2 / b if b > 0 else math.inf)
            rows.append((float(t), float(l2 * l2), b))
        out.write(f"gronwall_{_tag(eta)}.csv", _csv(["t", "norm_sq", "bound"], rows))
        gates.append(Gate(f"gronwall {_tag(eta)}", bool(ok), f"max |u|^2 / bound = {worst:.6g}"))
    return gates


def _absorbing(cfg, family, out):
    probes = probe_set(family, cfg.experiment["n_probes"])
    t = cfg.experiment["t"]
    lims, _ = mu_limits(family, probes)
    c0 = envelope_constant(family, lims.lower)
    taus = [t] + default_schedule(t, family.m, family.lam1, cfg.experiment["n_pullback"])
    radii = {eta: family_radius(family, eta) for eta in family.eta_schedule}
    rows = []
    ok = True
    tail = family.eta_schedule[len(family.eta_schedule) // 2 :]
    for tau in taus:
        psi2 = psi_envelope(family, c0, tau, probes)
        row = [tau] + [radii[e].squared(tau) for e in family.eta_schedule] + [psi2]
        ok &= all(radii[e].squared(tau) <= psi2 for e in tail)
        rows.append(row)
    header = ["t"] + [f"R_sq_{_tag(e)}" for e in family.eta_schedule] + ["Psi_sq"]
    out.write("absorbing.csv", _csv(header, rows))
    gates = [Gate("envelope dominates the schedule tail", bool(ok), f"c0 = {c0:.6g}")]
    eta_min = family.eta_schedule[-1]
    # sample far enough left to pass any compactly supported forcing pulse
    lo = min((p.lo for pcs in family.spec_at(eta_min).forcing.pieces() for p in pcs), default=t)
    left = min(t - 60.0, lo - 20.0) if math.isfinite(lo) else t - 60.0
    taus_far = [float(x) for x in np.linspace(t, left, 16)]
    tm = tempered_membership(radii[eta_min], family.mu_at(eta_min), taus_far, cfg.experiment["gate_tol"])
    out.write("tempered.csv", tm.to_csv())
    gates.append(Gate("absorbing family is tempered", tm.passed, tm.notes[0]))
    return gates


def _conditions(cfg, family, out):
    probes = probe_set(family, cfg.experiment["n_probes"])
    tol = cfg.experiment["gate_tol"]
    a1 = [check_A1(family.spec_at(e)) for e in probes[:4]] + [check_A1(family.limit_spec)]
    suff = sufficient_condition_report(family, eta_probes=probes, tol=tol)
    mu0 = family.mu0 if family.mu0 is not None else suff.details["recommended_mu0"]
    verdicts = {
        "A1": next((v for v in a1 if not v.passed), a1[-1]),
        "A2": check_A2(family, eta_probes=probes),
        "A3": check_A3(family, eta_probes=probes, tol=tol),
        "A4_strong": check_A4(family, "strong-dual", tol=tol, eta_probes=probes),
        "A4_weak": check_A4(family, "weak-L2", tol=tol, eta_probes=probes),
        "A5": check_A5(family, mu0, eta_probes=probes, tol=tol),
        "mu_limits": mu_limits(family, probes, tol)[1],
        "sufficient": suff,
    }
    out.write("conditions_report.txt", "\n\n".join(v.report() for v in verdicts.values()) + "\n")
    for name, v in verdicts.items():
        out.write(f"conditions_{name}.csv", v.to_csv())
    gates = [Gate(k, verdicts[k].passed, verdicts[k].verdict) for k in ("A1", "A2", "A3", "A5")]
    a4 = verdicts["A4_strong"].passed or verdicts["A4_weak"].passed
    gates.insert(3, Gate("A4", a4, f"strong {verdicts['A4_strong'].verdict}, weak {verdicts['A4_weak'].verdict}"))
    return gates


def _attractor(cfg, family, out):
    ex = cfg.experiment
    t = ex["t"]
    probes = probe_set(family, ex["n_probes"])
    c0 = envelope_constant(family, mu_limits(family, probes)[0].lower)
    sched = default_schedule(t, family.m, family.lam1, ex["n_pullback"])
    gates = []
    for eta in _members(family):
        if eta == 0.0:
            def radius(tau):
                return math.sqrt(psi_envelope(family, c0, tau, probes))
        else:
            radius = family_radius(family, eta)
        cloud = omega_limit(
            family.spec_at(eta), family.grid, radius, t, sched, cfg.time["dt"], ex["cloud_size"], ex["tol"],
            n_modes=ex["n_modes"], seed=ex["seed"], ceiling=cfg.time["ceiling"], max_retries=cfg.time["retries"],
        )
        out.write(f"cloud_{_tag(eta)}.csv", cloud.to_csv())
        top = float(cloud.norms().max())
        R = radius(t)
        gates.append(Gate(f"absorbing inclusion {_tag(eta)}", top <= R + 1e-9, f"max |u| = {top:.6g} <= R = {R:.6g}"))
    return gates


def _robustness(cfg, family, out):
    ex = cfg.experiment
    rep = robustness_experiment(
        family, ex["t"], dt=cfg.time["dt"], cloud_size=ex["cloud_size"], tol=ex["tol"], n_modes=ex["n_modes"],
        seed=ex["seed"], n_pullback=ex["n_pullback"], decay_factor=ex["decay_factor"], gate_tol=ex["gate_tol"],
        override_gates=ex["override_gates"],
    )
    out.write("robustness.csv", rep.to_csv())
    out.write("robustness_report.txt", rep.report() + "\n")
    if rep.envelope_rows:
        keys = list(rep.envelope_rows[0])
        out.write("envelope.csv", _csv(keys, [[r[k] for k in keys] for r in rep.envelope_rows]))
    if rep.limit_cloud is not None:
        out.write("cloud_limit.csv", rep.limit_cloud.to_csv())
    gates = [Gate(f"precondition {g.assumption}", g.passed or rep.gates_overridden, g.verdict) for g in rep.gates]
    gates.append(Gate("d(eta) decays", rep.passed, rep.notes[-1] if rep.notes else rep.verdict))
    for eta, cloud in rep.clouds.items():
        top, R = float(cloud.norms().max()), math.sqrt(rep.radii_sq[eta])
        gates.append(Gate(f"absorbing inclusion {_tag(eta)}", top <= R + 1e-9, f"max |u| = {top:.6g} <= R = {R:.6g}"))
    return gates


def _finite_time(cfg, family, out):
    tau = cfg.time["tau"]
    checkpoints = [tau + s for s in cfg.experiment["checkpoints"]]
    rep = finite_time_convergence_experiment(family, tau, initial_field(cfg, family.grid), checkpoints, dt=cfg.time["dt"])
    out.write("finite_time_errors.csv", rep.errors_csv())
    out.write("finite_time_norms.csv", rep.to_csv())
    out.write("finite_time_report.txt", "\n".join(rep.notes) + "\n")
    return [
        Gate("e(eta) decreasing", rep.passed, rep.notes[0]),
        Gate("norm gaps decrease at every checkpoint", rep.norm_gaps_decrease(), ""),
    ]


def _noncommutation(cfg, family, out):
    mu = family.mu_at(family.eta_schedule[-1])
    res = noncommutation_demo(mu, family.eta_schedule)
    v = res.as_verdict(cfg.experiment["tol"])
    out.write("noncommutation.csv", v.to_csv())
    out.write("noncommutation_report.txt", v.report() + "\n")
    return [Gate("iterated limits are 1 and 0", v.passed, "; ".join(v.notes))]


def heat_convergence(n: int, dt: float, T: float, L: float = 1.0, amplitude: float = 1.0):
    """Max-over-time L2 errors against ``A e^{-(pi/L)^2 t} sin(pi x / L)``.

    Returns ``(spatial, temporal)``: lists of ``(h or dt, error)`` for three
    grids ``n, 2n+1, 4n+3`` with ``dt`` shrinking like ``h^2``, and for three
    halvings of a coarse step on the base grid.
    """
    from .model import ZERO_FORCING, ConstantViscosity, OddPower, ProblemSpec, WeightDesc

    spec = ProblemSpec(ConstantViscosity(1.0), OddPower(0.0, 2), ZERO_FORCING, WeightDesc(Profile("sine", 1.0)), L)
    k = math.pi / L

    def max_error(grid, step):
        u0 = Field(grid, amplitude * np.sin(k * grid.nodes))
        worst = [0.0]

        def obs(t, u):
            e = u.values - amplitude * math.exp(-k * k * t) * np.sin(k * grid.nodes)
            worst[0] = max(worst[0], math.sqrt(grid.h * float(e @ e)))

        integrate(spec, u0, 0.0, T, step, keep_fields=False, observer=obs)
        return worst[0]

    grids = [Grid1D(L, n)]
    while len(grids) < 3:
        grids.append(grids[-1].refine())
    spatial = [(g.h, max_error(g, dt * (g.h / grids[0].h) ** 2)) for g in grids]
    coarse = T / 50.0
    temporal = [(coarse / 2**j, max_error(grids[0], coarse / 2**j)) for j in range(3)]
    return spatial, temporal


def _orders(pairs):
    return [math.log(e1 / e2) / math.log(s1 / s2) for (s1, e1), (s2, e2) in zip(pairs, pairs[1:])]


def _heat(cfg, family, out):
    spatial, temporal = heat_convergence(cfg.grid["n"], cfg.time["dt"], cfg.time["t_end"] - cfg.time["tau"], cfg.grid["L"])
    out.write("heat_spatial.csv", _csv(["h", "error"], spatial))
    out.write("heat_temporal.csv", _csv(["dt", "error"], temporal))
    so, to = _orders(spatial), _orders(temporal)
    return [
        Gate("spatial order >= 1.9", min(so) >= 1.9, ", ".join(f"{o:.4f}" for o in so)),
        Gate("temporal order >= 0.9", min(to) >= 0.9, ", ".join(f"{o:.4f}" for o in to)),
    ]


_EXPERIMENTS = {
    "energy-audit": _energy_audit,
    "gronwall": _gronwall,
    "absorbing": _absorbing,
    "conditions": _conditions,
    "attractor": _attractor,
    "robustness": _robustness,
    "finite-time": _finite_time,
    "noncommutation": _noncommutation,
    "heat-convergence": _heat,
}


def run_config(cfg: RunConfig, output_root: str | os.PathLike | None = None) -> RunResult:
    """Run the configured experiment; files land in ``<root>/<label>/<experiment>/``."""
    root = Path(output_root or os.environ.get(OUTPUT_ENV) or cfg.experiment["output"])
    family = build_family(cfg)
    name = cfg.experiment["name"]
    out = _Out(root / family.label / name)
    out.write("config.txt", emit_config(cfg))
    gates = _EXPERIMENTS[name](cfg, family, out)
    result = RunResult(name, out.dir, gates, out.files)
    out.write("summary.txt", result.summary(with_location=False) + "\n")
    return result
