"""Closed-form energy bounds: tail integrals, Gronwall bound, absorbing radii, envelopes.

Forcings are separable, ``h(s) = sum_j phi_j(s) g_j``, so

    ||h(s)||_*^2 = sum_{j,k} phi_j(s) phi_k(s) G_jk,   G_jk = (g_j, (-Lap_h)^{-1} g_k)_h,

and every temporal amplitude is a finite sum of windowed exponentials.  The
weighted integrals ``int e^{mu s} ||h(s)||_*^2 ds`` are therefore sums of
elementary exponential integrals.  Quadrature with a certified exponential
tail is kept as an independent route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as _quad
from scipy.linalg import solve_banded

from .errors import DivergentTail, InvalidMu
from .grid import Grid1D, first_eigenvalue
from .model import ForcingDesc, PerturbedFamily, ProblemSpec
from .verdict import ConditionVerdict, trend_verdict

__all__ = [
    "TailIntegralResult",
    "AbsorbingRadius",
    "dual_gram",
    "dual_norm_sq_at",
    "tail_integral",
    "interval_integral",
    "gronwall_bound",
    "absorbing_radius",
    "family_radius",
    "radius_term",
    "psi_envelope",
    "envelope_constant",
    "tempered_membership",
    "smallest_probes",
    "amplitude_integral",
]


@lru_cache(maxsize=256)
def _gram(profiles: tuple, grid: Grid1D) -> np.ndarray:
    if not profiles:
        return np.zeros((0, 0))
    P = np.array([p.sample(grid) for p in profiles])
    h2 = grid.h**2
    ab = np.empty((3, grid.n))
    ab[0], ab[1], ab[2] = -1.0 / h2, 2.0 / h2, -1.0 / h2
    W = solve_banded((1, 1), ab, P.T)
    G = grid.h * (P @ W)
    G = 0.5 * (G + G.T)
    G.flags.writeable = False
    return G


def dual_gram(forcing: ForcingDesc, grid: Grid1D) -> np.ndarray:
    """H^-1 Gram matrix of the spatial profiles of ``forcing``."""
    return _gram(tuple(t.profile for t in forcing.terms), grid)


def dual_norm_sq_at(forcing: ForcingDesc, grid: Grid1D, s: float) -> float:
    """``||h(s)||_*^2`` assembled from the Gram matrix and the amplitudes."""
    G = dual_gram(forcing, grid)
    phi = np.array([t.amplitude(s) for t in forcing.terms], dtype=float)
    return float(phi @ G @ phi) if phi.size else 0.0


def _exp_integral(coef: float, rate: float, lo: float, hi: float, shift: float) -> float:
    """``exp(-shift) * int_lo^hi coef exp(rate s) ds`` for ``lo < hi``, ``hi`` finite."""
    if rate == 0.0:
        if lo == -math.inf:
            raise DivergentTail("non-decaying integrand on an infinite interval")
        return coef * (hi - lo) * math.exp(-shift)
    if lo == -math.inf:
        if rate < 0:
            raise DivergentTail(f"integrand grows like exp({-rate:.6g}|s|) as s -> -inf")
        span_factor = 1.0
    else:
        span_factor = -math.expm1(-rate * (hi - lo))
    try:
        top = math.exp(rate * hi - shift)
    except OverflowError:
        return math.copysign(math.inf, coef)
    return coef * top * span_factor / rate


def _weighted_integral(forcing: ForcingDesc, grid: Grid1D, mu: float, lo: float, hi: float, shift: float) -> float:
    G = dual_gram(forcing, grid)
    pieces = forcing.pieces()
    total = 0.0
    for j, pj in enumerate(pieces):
        for k, pk in enumerate(pieces):
            g = G[j, k]
            if g == 0.0:
                continue
            for a in pj:
                for b in pk:
                    c = a.coef * b.coef * g
                    if c == 0.0:
                        continue
                    left = max(lo, a.lo, b.lo)
                    right = min(hi, a.hi, b.hi)
                    if not left < right:
                        continue
                    total += _exp_integral(c, mu + a.rate + b.rate, left, right, shift)
    return max(total, 0.0)


@dataclass(frozen=True)
class TailIntegralResult:
    """``value = int_{-inf}^t e^{mu s} ||h(s)||_*^2 ds``; ``weighted = e^{-mu t} * value``."""

    value: float
    weighted: float
    t_cut: float
    tail_error_bound: float
    method: str


def _tail_majorant(forcing: ForcingDesc, grid: Grid1D):
    """``(A, r, compact_lo)``: for ``s <= min(0, compact_lo)``, ``||h(s)||_* <= A e^{r s}``."""
    G = dual_gram(forcing, grid)
    A = 0.0
    rates = []
    compact_lo = math.inf
    for j, pcs in enumerate(forcing.pieces()):
        gnorm = math.sqrt(max(G[j, j], 0.0))
        for p in pcs:
            if p.coef == 0.0 or gnorm == 0.0:
                continue
            if p.lo == -math.inf:
                A += abs(p.coef) * gnorm
                rates.append(p.rate)
            else:
                compact_lo = min(compact_lo, p.lo)
    return A, (min(rates) if rates else 0.0), compact_lo


def _quadrature_tail(forcing, grid, mu, t, tol):
    A, r, compact_lo = _tail_majorant(forcing, grid)
    t_cut = min(t, 0.0, compact_lo)
    bound = 0.0
    if A > 0.0:
        decay = mu + 2.0 * r
        if decay <= 0:
            raise DivergentTail(f"tail bound needs mu + 2 rho > 0, got {decay:.6g}")
        t_cut = min(t_cut, math.log(0.5 * tol * decay / (A * A)) / decay)
        bound = A * A * math.exp(decay * t_cut) / decay
    if not math.isfinite(t_cut):
        # compactly supported forcing that lies entirely right of t
        return 0.0, t, 0.0

    def integrand(s):
        return math.exp(mu * s) * dual_norm_sq_at(forcing, grid, s)

    edges = sorted({p.lo for pcs in forcing.pieces() for p in pcs} | {p.hi for pcs in forcing.pieces() for p in pcs})
    cuts = [t_cut] + [e for e in edges if t_cut < e < t] + [t]
    value = 0.0
    per = 0.25 * tol / max(1, len(cuts) - 1)
    for a, b in zip(cuts, cuts[1:]):
        v, _ = _quad.quad(integrand, a, b, epsabs=per, epsrel=1e-12, limit=200)
        value += v
    return value, t_cut, bound


def tail_integral(forcing: ForcingDesc, grid: Grid1D, mu: float, t: float, tol: float = 1e-10, method: str = "auto") -> TailIntegralResult:
    """``int_{-inf}^t e^{mu s} ||h(s)||_*^2 ds``.

    ``method="auto"`` uses the closed form (every descriptor admits one);
    ``method="quadrature"`` integrates on ``[T_cut, t]`` and bounds the
    discarded tail by an exponential majorant.  Raises :class:`DivergentTail`
    when the integral does not exist.
    """
    if not (math.isfinite(mu) and math.isfinite(t)):
        raise ValueError("mu and t must be finite")
    if method in ("auto", "exact"):
        value = _weighted_integral(forcing, grid, mu, -math.inf, t, 0.0)
        weighted = _weighted_integral(forcing, grid, mu, -math.inf, t, mu * t)
        return TailIntegralResult(value, weighted, -math.inf, 0.0, "exact-closed-form")
    if method == "quadrature":
        value, t_cut, bound = _quadrature_tail(forcing, grid, mu, t, tol)
        weighted = value * math.exp(-mu * t)
        return TailIntegralResult(value, weighted, t_cut, bound, "quadrature-with-tail-bound")
    raise ValueError(f"unknown method {method!r}")


def interval_integral(forcing: ForcingDesc, grid: Grid1D, mu: float, a: float, b: float, weighted: bool = False) -> float:
    """``int_a^b e^{mu s} ||h(s)||_*^2 ds`` (times ``e^{-mu b}`` when ``weighted``)."""
    if b <= a:
        return 0.0
    return _weighted_integral(forcing, grid, mu, a, b, mu * b if weighted else 0.0)


def _check_mu(mu: float, m: float, lam1: float) -> None:
    if not (0.0 < mu < 2.0 * m * lam1):
        raise InvalidMu(f"mu = {mu:.6g} outside the open interval (0, 2 m lambda_1) = (0, {2 * m * lam1:.6g})")


def _resolve_lam1(grid: Grid1D, lam1: float | None) -> float:
    return first_eigenvalue(grid, "discrete") if lam1 is None else float(lam1)


def gronwall_bound(
    spec: ProblemSpec,
    grid: Grid1D,
    mu: float,
    u_tau_normsq: float,
    tau: float,
    t: float,
    *,
    lam1: float | None = None,
    m: float | None = None,
    kappa: float | None = None,
) -> float:
    """Upper bound on ``|u(t)|^2`` for any solution started from ``|u_tau|^2`` at ``tau``."""
    lam1 = _resolve_lam1(grid, lam1)
    m = spec.m if m is None else m
    kappa = spec.kappa if kappa is None else kappa
    _check_mu(mu, m, lam1)
    if t < tau:
        raise ValueError("t must not precede tau")
    forcing_term = interval_integral(spec.forcing, grid, mu, tau, t, weighted=True)
    return (
        math.exp(-mu * (t - tau)) * u_tau_normsq
        + 2.0 * kappa * spec.measure / mu
        + forcing_term / (2.0 * (m - mu / (2.0 * lam1)))
    )


def radius_term(forcing: ForcingDesc, grid: Grid1D, mu: float, t: float, m: float, lam1: float) -> float:
    """``e^{-mu t} / (2 (m - mu / (2 lam1))) * int_{-inf}^t e^{mu s} ||h(s)||_*^2 ds``."""
    weighted = _weighted_integral(forcing, grid, mu, -math.inf, t, mu * t)
    return weighted / (2.0 * (m - mu / (2.0 * lam1)))


@dataclass(frozen=True)
class AbsorbingRadius:
    """``R(t)^2 = 1 + 2 kappa |Omega| / mu + radius_term(t)``."""

    eta: float | None
    mu: float
    kappa_omega: float
    m: float
    lam1: float
    forcing: ForcingDesc
    grid: Grid1D

    @property
    def floor_sq(self) -> float:
        return 1.0 + 2.0 * self.kappa_omega / self.mu

    def squared(self, t: float) -> float:
        return self.floor_sq + radius_term(self.forcing, self.grid, self.mu, t, self.m, self.lam1)

    def __call__(self, t: float) -> float:
        return math.sqrt(self.squared(t))


def absorbing_radius(
    spec: ProblemSpec,
    grid: Grid1D,
    mu: float,
    *,
    eta: float | None = None,
    lam1: float | None = None,
    m: float | None = None,
    kappa: float | None = None,
) -> AbsorbingRadius:
    lam1 = _resolve_lam1(grid, lam1)
    m = spec.m if m is None else m
    kappa = spec.kappa if kappa is None else kappa
    _check_mu(mu, m, lam1)
    R = AbsorbingRadius(eta, mu, kappa * spec.measure, m, lam1, spec.forcing, grid)
    R.squared(0.0)  # surfaces DivergentTail at construction
    return R


def family_radius(family: PerturbedFamily, eta: float) -> AbsorbingRadius:
    """Absorbing radius of one member with the family-wide constants ``m``, ``kappa``."""
    return absorbing_radius(
        family.spec_at(eta), family.grid, family.mu_at(eta), eta=eta, lam1=family.lam1, m=family.m, kappa=family.kappa
    )


def smallest_probes(probes: Sequence[float], k: int = 4) -> list[float]:
    return sorted(probes)[:k]


def envelope_constant(family: PerturbedFamily, mu_lower: float) -> float:
    """``c_0 = 2 + 2 kappa |Omega| / mu_lower``."""
    return 2.0 + 2.0 * family.kappa * family.limit_spec.measure / mu_lower


def psi_envelope(
    family: PerturbedFamily,
    c: float,
    t: float,
    eta_probe_set: Sequence[float] | None = None,
    tol: float = 1e-10,
    k_tail: int = 4,
) -> float:
    """Squared envelope ``Psi_c(t)^2``.

    The limsup over eta is taken as the maximum over the ``k_tail`` smallest
    probes.
    """
    probes = list(family.eta_schedule if eta_probe_set is None else eta_probe_set)
    if len(probes) < 4:
        raise ValueError("psi_envelope needs at least 4 probes")
    if c < 0:
        raise ValueError("c must be nonnegative")
    worst = 0.0
    for eta in smallest_probes(probes, k_tail):
        spec = family.spec_at(eta)
        worst = max(worst, radius_term(spec.forcing, family.grid, family.mu_at(eta), t, family.m, family.lam1))
    return c + worst


def tempered_membership(
    radius_fn: Callable[[float], float], sigma: float, tau_sequence: Sequence[float], tol: float
) -> ConditionVerdict:
    """Sampled check that ``e^{sigma tau} R(tau)^2 -> 0`` as ``tau -> -inf``."""
    taus = [float(x) for x in tau_sequence]
    if len(taus) < 8:
        raise ValueError("tempered_membership needs at least 8 sample times")
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise ValueError("tau_sequence must be decreasing")
    rows = []
    products = []
    for tau in taus:
        R = radius_fn(tau)
        prod = math.exp(sigma * tau) * R * R
        products.append(prod)
        rows.append({"tau": tau, "R_sq": R * R, "weighted": prod})
    tail = products[len(products) // 2 :]
    verdict, why = trend_verdict(tail, tol)
    return ConditionVerdict(
        "tempered", verdict, rows, thresholds={"sigma": sigma, "tol": tol}, notes=[why + " (last half of tau samples)"]
    )


def amplitude_integral(amplitude, a: float, b: float, rate_shift: float = 0.0) -> float:
    """``int_a^b e^{rate_shift s} phi(s) ds`` for one temporal amplitude."""
    total = 0.0
    for p in amplitude.pieces():
        left, right = max(a, p.lo), min(b, p.hi)
        if p.coef != 0.0 and left < right:
            total += _exp_integral(p.coef, p.rate + rate_shift, left, right, 0.0)
    return total
