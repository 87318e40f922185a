"""Problem descriptors, the eta-parameterised family and the structural (A1) audit.

Descriptors form a closed algebra: every viscosity, reaction, forcing and
weight is one of a handful of frozen dataclasses.  That keeps tail bounds and
temporal integrals available in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable, NamedTuple, Union

import numpy as np

from .errors import DescriptorError, InvalidMu, UnknownEta
from .grid import Grid1D, first_eigenvalue
from .verdict import FAIL, PASS, ConditionVerdict

# ---------------------------------------------------------------------------
# viscosity


@dataclass(frozen=True)
class ConstantViscosity:
    value: float

    def __post_init__(self):
        if not self.value > 0:
            raise DescriptorError(f"viscosity must be positive, got {self.value}")

    @property
    def m_floor(self) -> float:
        return self.value

    def __call__(self, s):
        return np.full(np.shape(s), self.value, dtype=float) if np.ndim(s) else float(self.value)


@dataclass(frozen=True)
class RationalBumpViscosity:
    """``m_floor + amplitude / (1 + ((s - center) / width)^2)``."""

    m_floor: float
    amplitude: float
    center: float
    width: float

    def __post_init__(self):
        if not self.m_floor > 0:
            raise DescriptorError(f"m_floor must be positive, got {self.m_floor}")
        if self.amplitude < 0:
            raise DescriptorError("bump amplitude must be nonnegative to keep a >= m_floor")
        if not self.width > 0:
            raise DescriptorError(f"bump width must be positive, got {self.width}")

    def __call__(self, s):
        z = (np.asarray(s, dtype=float) - self.center) / self.width
        out = self.m_floor + self.amplitude / (1.0 + z * z)
        return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class PiecewiseLinearViscosity:
    """Linear interpolation through ``(s, a)`` breakpoints, constant beyond the ends."""

    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(s), float(a)) for s, a in self.breakpoints)
        if len(pts) < 1:
            raise DescriptorError("piecewise-linear viscosity needs at least one breakpoint")
        xs = [s for s, _ in pts]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise DescriptorError("breakpoint abscissae must be strictly increasing")
        if min(a for _, a in pts) <= 0:
            raise DescriptorError("piecewise-linear viscosity values must be positive")
        object.__setattr__(self, "breakpoints", pts)

    @property
    def m_floor(self) -> float:
        return min(a for _, a in self.breakpoints)

    def __call__(self, s):
        xs = [p[0] for p in self.breakpoints]
        ys = [p[1] for p in self.breakpoints]
        out = np.interp(np.asarray(s, dtype=float), xs, ys)
        return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class OscillatingViscosity:
    """``base + amplitude * sin(frequency * s)`` with floor ``base - |amplitude|``."""

    base: float
    amplitude: float
    frequency: float = 1.0

    def __post_init__(self):
        if not self.m_floor > 0:
            raise DescriptorError("base - |amplitude| must stay positive")

    @property
    def m_floor(self) -> float:
        return self.base - abs(self.amplitude)

    def __call__(self, s):
        out = self.base + self.amplitude * np.sin(self.frequency * np.asarray(s, dtype=float))
        return out if np.ndim(out) else float(out)


ViscosityDesc = Union[ConstantViscosity, RationalBumpViscosity, PiecewiseLinearViscosity, OscillatingViscosity]


def viscosity_breakpoints(visc) -> list[float]:
    if isinstance(visc, PiecewiseLinearViscosity):
        return [s for s, _ in visc.breakpoints]
    if isinstance(visc, RationalBumpViscosity):
        return [visc.center]
    return []


# ---------------------------------------------------------------------------
# reaction


@dataclass(frozen=True)
class Certificate:
    """Declared growth/dissipativity constants of a reaction term."""

    kappa1: float
    alpha1: float
    kappa2: float
    alpha2: float
    p: float

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)


_BOUNDED_SHAPES = ("constant", "sine", "bump")


def _bounded_shape(shape: str, s):
    if shape == "constant":
        return np.ones_like(s)
    if shape == "sine":
        return np.sin(s)
    if shape == "bump":
        return 1.0 / (1.0 + s * s)
    raise DescriptorError(f"unknown bounded shape {shape!r}")


def _check_p(p):
    if not p >= 2:
        raise DescriptorError(f"reaction exponent must satisfy p >= 2, got {p}")


@dataclass(frozen=True)
class OddPower:
    """``f(s) = -alpha |s|^(p-2) s``."""

    alpha: float
    p: float
    certificate: Certificate | None = None

    def __post_init__(self):
        _check_p(self.p)
        if self.certificate is None:
            a = self.alpha
            object.__setattr__(self, "certificate", Certificate(0.0, abs(a), 0.0, a, self.p))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = -self.alpha * np.abs(s) ** (self.p - 2) * s
        return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class OddPowerPlusBounded:
    """``-alpha |s|^(p-2) s + b * beta(s)`` with ``|beta| <= 1``.

    ``shape`` picks ``beta``: ``constant`` (1), ``sine`` (sin s) or
    ``bump`` (1 / (1 + s^2)).
    """

    alpha: float
    p: float
    bounded_amplitude: float
    shape: str = "constant"
    certificate: Certificate | None = None

    def __post_init__(self):
        _check_p(self.p)
        if self.shape not in _BOUNDED_SHAPES:
            raise DescriptorError(f"shape must be one of {_BOUNDED_SHAPES}, got {self.shape!r}")
        if self.certificate is None:
            object.__setattr__(self, "certificate", self._canonical())

    def _canonical(self) -> Certificate:
        a, p, b = self.alpha, self.p, abs(self.bounded_amplitude)
        if b == 0.0:
            return Certificate(0.0, abs(a), 0.0, a, p)
        if a <= 0:
            return Certificate(b, abs(a), 0.0, a, p)
        # sup_s (b|s| - (a/2)|s|^p), attained at s* = (2b / (a p))^(1/(p-1))
        s_star = (2.0 * b / (a * p)) ** (1.0 / (p - 1.0))
        kappa2 = (1.0 - 1.0 / p) * b * s_star
        return Certificate(b, a, kappa2 * (1.0 + 1e-9), a / 2.0, p)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = -self.alpha * np.abs(s) ** (self.p - 2) * s + self.bounded_amplitude * _bounded_shape(self.shape, s)
        return out if np.ndim(out) else float(out)


ReactionDesc = Union[OddPower, OddPowerPlusBounded]


def with_certificate(reaction: ReactionDesc, kappa1, alpha1, kappa2, alpha2) -> ReactionDesc:
    return replace(reaction, certificate=Certificate(kappa1, alpha1, kappa2, alpha2, reaction.p))


# ---------------------------------------------------------------------------
# spatial profiles, temporal amplitudes, forcing, weight


@dataclass(frozen=True)
class Profile:
    """Spatial shape: ``sine`` (a sin(k pi x / L)), ``parabola`` (4a x(L-x)/L^2) or ``uniform`` (a)."""

    kind: str
    amplitude: float = 1.0
    mode: int = 1

    def __post_init__(self):
        if self.kind not in ("sine", "parabola", "uniform"):
            raise DescriptorError(f"unknown profile kind {self.kind!r}")
        if self.kind == "sine" and (int(self.mode) != self.mode or self.mode < 1):
            raise DescriptorError("sine mode must be a positive integer")

    def evaluate(self, x, L: float):
        x = np.asarray(x, dtype=float)
        if self.kind == "sine":
            return self.amplitude * np.sin(self.mode * np.pi * x / L)
        if self.kind == "parabola":
            return self.amplitude * 4.0 * x * (L - x) / L**2
        return np.full(x.shape, float(self.amplitude))

    def sample(self, grid: Grid1D) -> np.ndarray:
        return self.evaluate(grid.nodes, grid.L)

    def vanishes_on_boundary(self, L: float) -> bool:
        ends = self.evaluate(np.array([0.0, L]), L)
        return bool(np.all(np.abs(ends) <= 1e-12 * max(1.0, abs(self.amplitude))))


class Piece(NamedTuple):
    """``coef * exp(rate * s)`` restricted to ``[lo, hi]`` (ends may be infinite)."""

    coef: float
    rate: float
    lo: float
    hi: float


def _eval_pieces(pieces, t):
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape)
    for c, r, lo, hi in pieces:
        inside = (t >= lo) & (t <= hi)
        with np.errstate(over="ignore"):
            expo = np.where(inside, r * t, -np.inf)
            out = out + c * np.exp(expo)
    return out if out.ndim else float(out)


class _Temporal:
    """Mixin: evaluation, products with profiles, and certified tail bounds."""

    def __call__(self, t):
        return _eval_pieces(self.pieces(), t)

    def support(self):
        pcs = self.pieces()
        if not pcs:
            return (math.inf, -math.inf)
        return (min(p.lo for p in pcs), max(p.hi for p in pcs))

    def tail_bound(self) -> tuple[float, float]:
        """Constants ``(C, rho)`` with ``|phi(t)| <= C exp(rho t)`` for every ``t <= 0``."""
        pcs = [p for p in self.pieces() if p.coef != 0.0 and p.lo <= 0.0]
        open_rates = [p.rate for p in pcs if p.lo == -math.inf]
        rho = min(open_rates) if open_rates else max([max(p.rate, 0.0) for p in pcs], default=0.0)
        C = 0.0
        for c, r, lo, hi in pcs:
            k = r - rho
            s = min(hi, 0.0) if k >= 0 else lo
            try:
                C += abs(c) * math.exp(k * s)
            except OverflowError:
                return math.inf, rho
        return C, rho

    @property
    def exact_integral_available(self) -> bool:
        return True


@dataclass(frozen=True)
class ConstantAmp(_Temporal):
    c: float

    def pieces(self):
        return [Piece(float(self.c), 0.0, -math.inf, math.inf)]


@dataclass(frozen=True)
class ExponentialAmp(_Temporal):
    """``c * exp(gamma t)``."""

    c: float
    gamma: float

    def pieces(self):
        return [Piece(float(self.c), float(self.gamma), -math.inf, math.inf)]


@dataclass(frozen=True)
class BumpAmp(_Temporal):
    """Indicator pulse ``c * exp(rate t) * 1[left, left + width](t)``."""

    c: float
    left: float
    width: float
    rate: float = 0.0

    def __post_init__(self):
        if not self.width > 0:
            raise DescriptorError(f"bump width must be positive, got {self.width}")

    def pieces(self):
        return [Piece(float(self.c), float(self.rate), float(self.left), float(self.left + self.width))]


@dataclass(frozen=True)
class ScaledAmp(_Temporal):
    """``factor * inner(t)``; the factor carries eta-dependence such as f(eta)."""

    inner: "TemporalDesc"
    factor: float

    def pieces(self):
        return [Piece(p.coef * self.factor, p.rate, p.lo, p.hi) for p in self.inner.pieces()]


@dataclass(frozen=True)
class SumAmp(_Temporal):
    terms: tuple

    def pieces(self):
        return [p for term in self.terms for p in term.pieces()]


TemporalDesc = Union[ConstantAmp, ExponentialAmp, BumpAmp, ScaledAmp, SumAmp]


@dataclass(frozen=True)
class ForcingTerm:
    profile: Profile
    amplitude: TemporalDesc


@dataclass(frozen=True)
class ForcingDesc:
    """``h(x, t) = sum_j phi_j(t) g_j(x)``."""

    terms: tuple[ForcingTerm, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    def check_boundary(self, L: float) -> None:
        for term in self.terms:
            if not term.profile.vanishes_on_boundary(L):
                raise DescriptorError(f"forcing profile {term.profile} does not vanish on the boundary")

    @property
    def is_zero(self) -> bool:
        return all(p.coef == 0.0 for term in self.terms for p in term.amplitude.pieces())

    def sample(self, grid: Grid1D, t: float) -> np.ndarray:
        out = np.zeros(grid.n)
        for term in self.terms:
            a = term.amplitude(t)
            if a != 0.0:
                out += a * term.profile.sample(grid)
        return out

    def __add__(self, other: "ForcingDesc") -> "ForcingDesc":
        return ForcingDesc(self.terms + other.terms)

    def scaled(self, factor: float) -> "ForcingDesc":
        return ForcingDesc(tuple(ForcingTerm(t.profile, ScaledAmp(t.amplitude, factor)) for t in self.terms))

    def minus(self, other: "ForcingDesc") -> "ForcingDesc":
        return self + other.scaled(-1.0)

    def pieces(self) -> list[list[Piece]]:
        return [term.amplitude.pieces() for term in self.terms]


ZERO_FORCING = ForcingDesc(())


@dataclass(frozen=True)
class WeightDesc:
    """Profile ``g_l`` defining ``l(u) = (g_l, u)``."""

    profile: Profile

    def sample(self, grid: Grid1D) -> np.ndarray:
        return self.profile.sample(grid)


# ---------------------------------------------------------------------------
# problem and family


@dataclass(frozen=True)
class ProblemSpec:
    viscosity: ViscosityDesc
    reaction: ReactionDesc
    forcing: ForcingDesc
    weight: WeightDesc
    domain_length: float = 1.0

    def __post_init__(self):
        if not self.domain_length > 0:
            raise DescriptorError("domain length must be positive")
        self.forcing.check_boundary(self.domain_length)

    @property
    def m(self) -> float:
        return self.viscosity.m_floor

    @property
    def kappa(self) -> float:
        # the dissipativity constant kappa_2 of (A1) plays the role of kappa in the energy bound
        return self.reaction.certificate.kappa2

    @property
    def measure(self) -> float:
        return self.domain_length


MuRule = Callable[[float, float, float], float]


@dataclass(frozen=True, eq=False)
class PerturbedFamily:
    """``eta -> (ProblemSpec, mu_eta)`` on a fixed discretisation grid.

    ``builder(eta)`` returns the member for ``eta`` in (0, 1]; ``mu_rule(eta, m,
    lam1)`` returns its tempered exponent.  ``mu0`` is the candidate exponent of
    the limit problem.
    """

    builder: Callable[[float], ProblemSpec]
    eta_schedule: tuple[float, ...]
    limit_spec: ProblemSpec
    grid: Grid1D
    mu_rule: MuRule
    mu0: float | None = None
    label: str = "family"
    strict: bool = True

    def __post_init__(self):
        sched = tuple(float(e) for e in self.eta_schedule)
        object.__setattr__(self, "eta_schedule", sched)
        if not sched:
            raise DescriptorError("eta schedule is empty")
        if any(not (0.0 < e <= 1.0) for e in sched):
            raise DescriptorError("eta schedule entries must lie in (0, 1]")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise DescriptorError("eta schedule must be strictly decreasing")
        if self.strict:
            top = 2.0 * self.m * self.lam1
            for eta in sched:
                mu = self.mu_at(eta)
                if not (0.0 < mu < top):
                    raise InvalidMu(f"mu({eta}) = {mu} outside the open interval (0, {top})")
            if self.mu0 is not None and not (0.0 < self.mu0 < top):
                raise InvalidMu(f"mu0 = {self.mu0} outside the open interval (0, {top})")

    def spec_at(self, eta: float) -> ProblemSpec:
        if eta == 0:
            return self.limit_spec
        return self.builder(float(eta))

    def mu_at(self, eta: float) -> float:
        if eta == 0:
            if self.mu0 is None:
                raise InvalidMu("family has no limit exponent mu0")
            return float(self.mu0)
        m = self.spec_at(eta).m
        return float(self.mu_rule(float(eta), m, self.lam1))

    @cached_property
    def lam1(self) -> float:
        return first_eigenvalue(self.grid, "discrete")

    @cached_property
    def m(self) -> float:
        specs = [self.builder(e) for e in self.eta_schedule] + [self.limit_spec]
        return min(s.m for s in specs)

    @cached_property
    def kappa(self) -> float:
        specs = [self.builder(e) for e in self.eta_schedule] + [self.limit_spec]
        return max(s.kappa for s in specs)

    @property
    def mu_ceiling(self) -> float:
        return 2.0 * self.m * self.lam1


def instantiate(family: PerturbedFamily, eta: float) -> ProblemSpec:
    """Concrete member of the family; ``eta = 0`` yields the limit problem."""
    if eta == 0:
        return family.limit_spec
    for e in family.eta_schedule:
        if e == eta:
            return family.builder(e)
    raise UnknownEta(f"eta = {eta!r} is not in the schedule {family.eta_schedule}")


# ---------------------------------------------------------------------------
# (A1) audit


def check_A1(spec: ProblemSpec, sample_range: float = 10.0, n_samples: int = 4001) -> ConditionVerdict:
    """Verify the declared reaction certificate and the viscosity floor by dense sampling.

    A sampling audit cannot prove the inequalities on all of R; the verdict
    records the sampled range.
    """
    S = float(sample_range)
    if not S > 0:
        raise ValueError("sample range must be positive")
    if n_samples < 100:
        raise ValueError("need at least 100 samples")
    cert = spec.reaction.certificate
    extra = [0.0, -S, S] + [b for b in viscosity_breakpoints(spec.viscosity) if -S <= b <= S]
    s = np.unique(np.concatenate([np.linspace(-S, S, n_samples), extra]))
    f = np.asarray(spec.reaction(s))
    abs_s = np.abs(s)

    growth_rhs = cert.kappa1 + cert.alpha1 * abs_s ** (cert.p - 1)
    growth = growth_rhs - np.abs(f)
    diss_rhs = cert.kappa2 - cert.alpha2 * abs_s**cert.p
    diss = diss_rhs - f * s
    a = np.asarray(spec.viscosity(s))
    m = spec.m
    visc = a - m

    eps = 1e-12
    rows = []
    ok = True
    for name, margin, scale in (
        ("growth", growth, 1.0 + np.abs(growth_rhs)),
        ("dissipativity", diss, 1.0 + np.abs(diss_rhs) + np.abs(f * s)),
        ("viscosity_floor", visc, 1.0 + np.abs(a)),
    ):
        k = int(np.argmin(margin / scale))
        holds = bool(np.all(margin >= -eps * scale))
        ok &= holds
        rows.append({"inequality": name, "worst_margin": float(margin[k]), "at_s": float(s[k]), "holds": holds})

    notes = [f"sampled s in [-{S:g}, {S:g}] with {s.size} points; a sampling audit, not a proof"]
    constants_ok = cert.alpha1 > 0 and cert.alpha2 > 0 and cert.kappa1 >= 0 and cert.kappa2 >= 0 and cert.p >= 2 and m > 0
    rows.append(
        {"inequality": "constants", "worst_margin": float(min(cert.alpha1, cert.alpha2, m)), "at_s": float("nan"), "holds": constants_ok}
    )
    if not constants_ok:
        notes.append("declared constants violate alpha1, alpha2, m > 0, kappa1, kappa2 >= 0, p >= 2")
    ok &= constants_ok
    return ConditionVerdict(
        "A1",
        PASS if ok else FAIL,
        rows,
        thresholds={
            "S": S,
            "n_samples": int(s.size),
            "kappa1": cert.kappa1,
            "alpha1": cert.alpha1,
            "kappa2": cert.kappa2,
            "alpha2": cert.alpha2,
            "p": cert.p,
            "m": m,
        },
        notes=notes,
    )
