"""Sampled audits of (A2)-(A5), the sufficient conditions for (A5), and the
limit/limsup non-commutation example.

Every limit statement becomes a monotone-trend-plus-threshold test over a
declared sample sequence (see :func:`pullback_lab.verdict.trend_verdict`);
weak convergence is tested against a finite dictionary of fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DivergentTail, InvalidMu
from .estimates import amplitude_integral, interval_integral, smallest_probes, tail_integral
from .grid import Grid1D, sine_mode
from .model import PerturbedFamily
from .verdict import FAIL, INCONCLUSIVE, PASS, ConditionVerdict, trend_verdict

__all__ = [
    "MuLimits",
    "NoncommutationResult",
    "default_dictionary",
    "check_A2",
    "check_A3",
    "check_A4",
    "check_A5",
    "mu_limits",
    "sufficient_condition_report",
    "noncommutation_demo",
    "combine",
]

DEFAULT_T_SEQUENCE = tuple(-float(k) for k in range(0, 41, 4))


def default_dictionary(grid: Grid1D, n_modes: int = 8, n_random: int = 4, seed: int = 0) -> list[np.ndarray]:
    """First ``n_modes`` discrete sine modes plus ``n_random`` seeded unit-norm random fields."""
    out = [sine_mode(grid, k).values for k in range(1, min(n_modes, grid.n) + 1)]
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        v = rng.standard_normal(grid.n)
        out.append(v / math.sqrt(grid.h * float(v @ v)))
    return out


def combine(verdicts: Sequence[str]) -> str:
    if FAIL in verdicts:
        return FAIL
    if INCONCLUSIVE in verdicts:
        return INCONCLUSIVE
    return PASS


def _probes(family: PerturbedFamily, eta_probes) -> list[float]:
    probes = list(family.eta_schedule if eta_probes is None else eta_probes)
    return sorted((float(e) for e in probes), reverse=True)


# ---------------------------------------------------------------------------


def check_A2(family: PerturbedFamily, tol: float = 1e-10, eta_probes=None) -> ConditionVerdict:
    """Every probed ``mu_eta`` lies in ``(0, 2 m lam1)`` and its forcing tail at ``t = 0`` converges."""
    top = family.mu_ceiling
    rows = []
    ok = True
    for eta in _probes(family, eta_probes):
        mu = family.mu_at(eta)
        in_range = 0.0 < mu < top
        try:
            value = tail_integral(family.spec_at(eta).forcing, family.grid, mu, 0.0, tol).value
            converges = math.isfinite(value)
            status = "converges" if converges else "overflow"
        except DivergentTail as exc:
            value, converges, status = math.inf, False, f"DivergentTail: {exc}"
        ok &= in_range and converges
        rows.append({"eta": eta, "mu": mu, "mu_in_range": in_range, "tail_at_0": value, "status": status})
    return ConditionVerdict("A2", PASS if ok else FAIL, rows, thresholds={"mu_ceiling": top, "tol": tol})


def _pairings(forcing, grid: Grid1D, dictionary, a: float, b: float, temporal_windows=None) -> float:
    """max over dictionary fields and time windows of ``|int (h(s), v) ds|``."""
    windows = temporal_windows or [(a, b)]
    prof = [term.profile.sample(grid) for term in forcing.terms]
    worst = 0.0
    for lo, hi in windows:
        amps = [amplitude_integral(term.amplitude, lo, hi) for term in forcing.terms]
        for v in dictionary:
            val = sum(A * grid.h * float(g @ v) for A, g in zip(amps, prof))
            worst = max(worst, abs(val))
    return worst


def check_A3(
    family: PerturbedFamily,
    K: float = 10.0,
    dictionary=None,
    eta_probes=None,
    tol: float = 1e-3,
    window: tuple[float, float] = (-1.0, 0.0),
    n_samples: int = 2001,
) -> ConditionVerdict:
    """Uniform convergence of ``a``, ``f`` on ``[-K, K]``; weak convergence of ``l`` and ``h``."""
    probes = _probes(family, eta_probes)
    if len(probes) < 4:
        raise ValueError("check_A3 needs at least 4 probes")
    grid = family.grid
    dictionary = default_dictionary(grid) if dictionary is None else dictionary
    base = family.limit_spec
    s = np.linspace(-K, K, n_samples)
    a0, f0 = np.asarray(base.viscosity(s)), np.asarray(base.reaction(s))
    g0 = base.weight.sample(grid)
    rows = []
    for eta in probes:
        spec = family.spec_at(eta)
        dl = spec.weight.sample(grid) - g0
        rows.append(
            {
                "eta": eta,
                "sup_a": float(np.max(np.abs(np.asarray(spec.viscosity(s)) - a0))),
                "sup_f": float(np.max(np.abs(np.asarray(spec.reaction(s)) - f0))),
                "weight_pairing": max(abs(grid.h * float(dl @ v)) for v in dictionary),
                "forcing_pairing": _pairings(spec.forcing.minus(base.forcing), grid, dictionary, *window),
            }
        )
    verdicts, notes = [], []
    for key in ("sup_a", "sup_f", "weight_pairing", "forcing_pairing"):
        v, why = trend_verdict([r[key] for r in rows], tol)
        verdicts.append(v)
        notes.append(f"{key}: {why}")
    return ConditionVerdict(
        "A3",
        combine(verdicts),
        rows,
        thresholds={"K": K, "tol": tol, "window": window, "dictionary_size": len(dictionary)},
        notes=notes,
    )


def check_A4(
    family: PerturbedFamily,
    mode: str = "strong-dual",
    window: tuple[float, float] = (-1.0, 0.0),
    tol: float = 1e-3,
    eta_probes=None,
    dictionary=None,
) -> ConditionVerdict:
    """Convergence of ``h_eta -> h_0`` on a finite window, strongly in H^-1 or weakly in L2."""
    tau, T = window
    if not (math.isfinite(tau) and math.isfinite(T) and tau < T):
        raise ValueError("window must be a finite interval")
    grid = family.grid
    h0 = family.limit_spec.forcing
    rows = []
    notes = []
    if mode == "weak-L2":
        dictionary = default_dictionary(grid) if dictionary is None else dictionary
        mid = 0.5 * (tau + T)
        tests = [(tau, T), (tau, mid), (mid, T)]
    elif mode != "strong-dual":
        raise ValueError(f"mode must be 'strong-dual' or 'weak-L2', got {mode!r}")
    for eta in _probes(family, eta_probes):
        diff = family.spec_at(eta).forcing.minus(h0)
        if mode == "strong-dual":
            dist = interval_integral(diff, grid, 0.0, tau, T)
        else:
            dist = _pairings(diff, grid, dictionary, tau, T, tests)
        row = {"eta": eta, "distance": dist}
        lo, hi = _support(family.spec_at(eta).forcing)
        if math.isfinite(lo) and math.isfinite(hi):
            row["support"] = f"[{lo:.6g}, {hi:.6g}]"
            if hi <= tau:
                row["support"] += " left of window"
        rows.append(row)
    if any("left of window" in str(r.get("support", "")) for r in rows):
        notes.append("some forcings are supported entirely left of the window; convergence there is vacuous")
    verdict, why = trend_verdict([r["distance"] for r in rows], tol)
    notes.insert(0, why)
    return ConditionVerdict(f"A4 ({mode})", verdict, rows, thresholds={"window": window, "tol": tol}, notes=notes)


def _support(forcing) -> tuple[float, float]:
    pcs = [p for pl in forcing.pieces() for p in pl if p.coef != 0.0]
    if not pcs:
        return (math.nan, math.nan)
    return (min(p.lo for p in pcs), max(p.hi for p in pcs))


def _ratio_factor(family: PerturbedFamily, mu: float) -> float:
    return 1.0 / (family.m - mu / (2.0 * family.lam1))


def check_A5(
    family: PerturbedFamily,
    mu0: float,
    t_sequence: Sequence[float] = DEFAULT_T_SEQUENCE,
    eta_probes=None,
    tol: float = 1e-3,
    k_tail: int = 4,
) -> ConditionVerdict:
    """Tail of ``h_0`` at ``mu0`` converges, and ``Q(t) -> 0`` as ``t -> -inf``.

    ``Q(t)`` is the max over the ``k_tail`` smallest probes of
    ``e^{(mu0 - mu_eta) t} / (m - mu_eta / (2 lam1)) * int_{-inf}^t e^{mu_eta s} ||h_eta||_*^2 ds``.
    """
    if not (0.0 < mu0 < family.mu_ceiling):
        raise InvalidMu(f"mu0 = {mu0:.6g} outside (0, {family.mu_ceiling:.6g})")
    ts = [float(t) for t in t_sequence]
    if any(b >= a for a, b in zip(ts, ts[1:])):
        raise ValueError("t_sequence must be decreasing")
    grid = family.grid
    notes = []
    try:
        h0_tail = tail_integral(family.limit_spec.forcing, grid, mu0, 0.0).value
        limit_ok = math.isfinite(h0_tail)
    except DivergentTail as exc:
        h0_tail, limit_ok = math.inf, False
        notes.append(f"limit forcing tail diverges at mu0: {exc}")
    tail = smallest_probes(_probes(family, eta_probes), k_tail)
    rows = []
    divergent = False
    for t in ts:
        best, arg = 0.0, None
        for eta in tail:
            mu = family.mu_at(eta)
            try:
                w = tail_integral(family.spec_at(eta).forcing, grid, mu, t).weighted
            except DivergentTail:
                w, divergent = math.inf, True
            q = math.exp(mu0 * t) * w * _ratio_factor(family, mu) if w > 0 else 0.0
            if q >= best:
                best, arg = q, eta
        rows.append({"t": t, "Q": best, "argmax_eta": arg, "h0_tail_at_0": h0_tail})
    trend, why = trend_verdict([r["Q"] for r in rows], tol)
    notes.insert(0, f"Q(t): {why}")
    if divergent:
        notes.append("a perturbed forcing tail diverges")
        trend = FAIL
    verdict = trend if limit_ok else FAIL
    return ConditionVerdict(
        "A5", verdict, rows, thresholds={"mu0": mu0, "tol": tol, "k_tail": k_tail, "probes": tuple(tail)}, notes=notes
    )


@dataclass(frozen=True)
class MuLimits:
    lower: float
    upper: float


def mu_limits(family: PerturbedFamily, eta_probes=None, tol: float = 1e-2) -> tuple[MuLimits, ConditionVerdict]:
    """liminf/limsup of ``mu_eta`` over the last half of the probes, and the ``liminf > 0`` check."""
    probes = _probes(family, eta_probes)
    if len(probes) < 8:
        raise ValueError("mu_limits needs at least 8 probes")
    tail = probes[len(probes) // 2 :]
    mus = [family.mu_at(e) for e in tail]
    lim = MuLimits(min(mus), max(mus))
    rows = [{"eta": e, "mu": m} for e, m in zip(tail, mus)]
    ok = lim.lower > tol
    return lim, ConditionVerdict(
        "1742",
        PASS if ok else FAIL,
        rows,
        thresholds={"tol": tol},
        notes=[f"liminf = {lim.lower:.6g}, limsup = {lim.upper:.6g}"],
        details={"mu_lower": lim.lower, "mu_upper": lim.upper},
    )


# ---------------------------------------------------------------------------


def _tails_at(family, probes, t):
    out = []
    for eta in probes:
        try:
            out.append(tail_integral(family.spec_at(eta).forcing, family.grid, family.mu_at(eta), t).value)
        except DivergentTail:
            out.append(math.inf)
    return out


def sufficient_condition_report(
    family: PerturbedFamily,
    eta_probes=None,
    t_sequence: Sequence[float] = DEFAULT_T_SEQUENCE,
    tol: float = 1e-3,
    windows: Sequence[float] = (1.0, 4.0, 16.0),
    k_tail: int = 4,
) -> ConditionVerdict:
    """Evaluate the hypotheses of the sufficient conditions for (A5) in order.

    Stages: the uniform tail bound (1056), convergence or spread of
    ``mu_eta``, strong and weak convergence of ``h_eta`` on windows
    ``[-M, 0]``, the limsup equality of tail integrals, and the uniform tail
    decay (1152).  The verdict passes when either the convergent-exponent
    route or the liminf/limsup route is numerically satisfied.
    """
    probes = _probes(family, eta_probes)
    grid = family.grid
    top = family.mu_ceiling
    rows = []
    notes = []

    a2 = check_A2(family, eta_probes=probes)
    rows.append({"stage": "A2", "verdict": a2.verdict, "value": max(r["tail_at_0"] for r in a2.evidence)})

    tails0 = _tails_at(family, probes, 0.0)
    half = len(tails0) // 2
    finite = all(math.isfinite(v) for v in tails0)
    bounded = finite and max(tails0[half:]) <= (1.0 + tol) * max(tails0[:half] or [0.0]) + tol
    v1056 = PASS if bounded else FAIL
    rows.append({"stage": "1056", "verdict": v1056, "value": max(tails0)})

    lims, v1742 = mu_limits(family, probes, tol)
    converged = lims.upper - lims.lower <= tol * max(1.0, lims.upper)
    mu_lim = family.mu_at(probes[-1])
    rows.append({"stage": "1742", "verdict": v1742.verdict, "value": lims.lower})
    rows.append({"stage": "mu_convergence", "verdict": PASS if converged else FAIL, "value": lims.upper - lims.lower})

    strong = [check_A4(family, "strong-dual", (-M, 0.0), tol, probes) for M in windows]
    weak = [check_A4(family, "weak-L2", (-M, 0.0), tol, probes) for M in windows]
    v_strong = combine([c.verdict for c in strong])
    v_weak = combine([c.verdict for c in weak])
    rows.append({"stage": "strong_convergence", "verdict": v_strong, "value": max(c.evidence[-1]["distance"] for c in strong)})
    rows.append({"stage": "weak_convergence", "verdict": v_weak, "value": max(c.evidence[-1]["distance"] for c in weak)})

    tail_etas = smallest_probes(probes, k_tail)
    limsup0 = max(_tails_at(family, tail_etas, 0.0))
    try:
        ref = tail_integral(family.limit_spec.forcing, grid, mu_lim, 0.0).value
    except DivergentTail:
        ref = math.inf
    eq_ok = math.isfinite(limsup0) and math.isfinite(ref) and abs(limsup0 - ref) <= tol * max(1.0, ref)
    rows.append({"stage": "limsup_equality", "verdict": PASS if eq_ok else FAIL, "value": limsup0 - ref})

    P = [max(_tails_at(family, tail_etas, t)) for t in t_sequence]
    v1152, why1152 = trend_verdict(P, tol)
    rows.append({"stage": "1152", "verdict": v1152, "value": P[-1]})
    notes.append(f"1152: {why1152}")

    # each fixed eta: lim_{t -> -inf} of its own tail, evaluated past its support
    t_last = float(t_sequence[-1])
    per_eta = []
    for eta in tail_etas:
        lo, _ = _support(family.spec_at(eta).forcing)
        t_far = min(t_last, lo - 1.0) if math.isfinite(lo) else t_last
        per_eta.append(_tails_at(family, [eta], t_far)[0])
    noncommuting = v1152 == FAIL and max(per_eta) < tol
    if noncommuting:
        notes.append("non-commutation: each tail vanishes as t -> -inf but the limsup over eta does not")

    base = a2.passed and v_weak == PASS and v1056 == PASS
    prop23 = base and converged
    prop24 = prop23 and 0.0 < mu_lim < top and v_strong == PASS and eq_ok
    final_prop = base and v1742.passed and lims.upper < top and v1152 == PASS
    eps = 0.5 * (top - lims.upper)
    recommended = lims.upper + eps
    rows.append({"stage": "prop23", "verdict": PASS if prop23 else FAIL, "value": mu_lim})
    rows.append({"stage": "prop24", "verdict": PASS if prop24 else FAIL, "value": mu_lim})
    rows.append({"stage": "liminf_limsup_prop", "verdict": PASS if final_prop else FAIL, "value": recommended})
    return ConditionVerdict(
        "A5-sufficient",
        PASS if (prop24 or final_prop) else FAIL,
        rows,
        thresholds={"tol": tol, "windows": tuple(windows), "k_tail": k_tail},
        notes=notes,
        details={
            "prop23": prop23,
            "prop24": prop24,
            "liminf_limsup_prop": final_prop,
            "limit_mu0": mu_lim,
            "recommended_mu0": recommended,
            "epsilon": eps,
            "noncommutation": noncommuting,
            "mu_limits": lims,
        },
    )


# ---------------------------------------------------------------------------


@dataclass
class NoncommutationResult:
    table: list[dict]
    lim_t_limsup_eta: float
    limsup_eta_lim_t: float
    inner_eta: dict = field(default_factory=dict)  # t -> limsup over eta
    inner_t: dict = field(default_factory=dict)  # eta -> limit in t

    def as_verdict(self, tol: float = 1e-6) -> ConditionVerdict:
        ok = abs(self.lim_t_limsup_eta - 1.0) <= tol and abs(self.limsup_eta_lim_t) <= tol
        return ConditionVerdict(
            "noncommutation",
            PASS if ok else FAIL,
            self.table,
            thresholds={"tol": tol},
            notes=[
                f"lim_t limsup_eta = {self.lim_t_limsup_eta:.17g}",
                f"limsup_eta lim_t = {self.limsup_eta_lim_t:.17g}",
            ],
        )


def _bump_integral(mu: float, eta: float, t: float) -> float:
    """``int_{-inf}^t e^{mu s} psi_eta(s) ds`` with ``psi_eta = e^{-mu s} 1[-1/eta - 1, -1/eta]``."""
    from .model import BumpAmp

    return amplitude_integral(BumpAmp(1.0, -1.0 / eta - 1.0, 1.0, -mu), -math.inf, t, rate_shift=mu)


def _settled(values, k, tol):
    return len(values) >= k and max(values[-k:]) - min(values[-k:]) <= tol


def _extend(fn, samples, step, past, k, tol, max_extend):
    """Append samples via ``step`` until ``past(last)`` holds and the last ``k`` values agree.

    ``past`` encodes when the moving support has cleared the sample, so an
    early plateau (before the bump arrives) is not mistaken for the limit.
    """
    samples = list(samples)
    vals = [fn(x) for x in samples]
    while max_extend > 0 and not (past(samples[-1]) and _settled(vals, k, tol)):
        samples.append(step(samples[-1]))
        vals.append(fn(samples[-1]))
        max_extend -= 1
    return vals


def noncommutation_demo(
    mu: float,
    eta_probes: Sequence[float] = tuple(2.0**-k for k in range(1, 9)),
    t_sequence: Sequence[float] = (0.0, -2.0, -4.0, -8.0, -16.0, -32.0),
    k_tail: int = 4,
    stable_tol: float = 1e-12,
    max_extend: int = 60,
) -> NoncommutationResult:
    """Iterated limits of ``int_{-inf}^t e^{mu s} psi_eta(s) ds`` for a unit-mass bump moving left.

    Inner limits extend the supplied samples (halving eta, doubling |t|)
    until the last ``k_tail`` values agree to ``stable_tol``.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    probes = sorted((float(e) for e in eta_probes), reverse=True)
    ts = [float(t) for t in t_sequence]
    table = [{"eta": e, "t": t, "integral": _bump_integral(mu, e, t)} for e in probes for t in ts]

    def halve(e):
        return e / 2.0

    def double(t):
        return 2.0 * t - 1.0

    def limsup_over_eta(t):
        # the support [-1/eta - 1, -1/eta] lies left of t once eta <= -1/t
        vals = _extend(lambda e: _bump_integral(mu, e, t), probes, halve, lambda e: -1.0 / e <= t, k_tail, stable_tol, max_extend)
        return max(vals[-k_tail:])

    def lim_over_t(eta):
        lo = -1.0 / eta - 1.0
        return _extend(lambda t: _bump_integral(mu, eta, t), ts, double, lambda t: t < lo, k_tail, stable_tol, max_extend)[-1]

    inner_eta = {t: limsup_over_eta(t) for t in ts}
    inner_t = {e: lim_over_t(e) for e in probes}
    a = _extend(limsup_over_eta, ts, double, lambda t: True, k_tail, stable_tol, max_extend)[-1]
    b = max(_extend(lim_over_t, probes, halve, lambda e: True, k_tail, stable_tol, max_extend)[-k_tail:])
    return NoncommutationResult(table, a, b, inner_eta, inner_t)
