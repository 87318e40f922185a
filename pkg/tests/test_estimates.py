import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from families import LONG, WEIGHT, forcing, nd16_family
from pullback_lab.errors import DivergentTail, InvalidMu
from pullback_lab.estimates import (
    absorbing_radius,
    amplitude_integral,
    dual_gram,
    dual_norm_sq_at,
    envelope_constant,
    family_radius,
    gronwall_bound,
    interval_integral,
    psi_envelope,
    radius_term,
    smallest_probes,
    tail_integral,
    tempered_membership,
)
from pullback_lab.grid import Field, Grid1D, dual_norm, first_eigenvalue
from pullback_lab.model import (
    ZERO_FORCING,
    BumpAmp,
    ConstantAmp,
    ConstantViscosity,
    ExponentialAmp,
    OddPower,
    OddPowerPlusBounded,
    ProblemSpec,
    Profile,
    SumAmp,
)

GRID = Grid1D(1.0, 31)
SINE_SQ = 0.5 / first_eigenvalue(GRID)  # ||sin(pi x)||_*^2 on the grid, exactly


def test_gram_diagonal_is_the_dual_norm():
    h = forcing(Profile("sine", 2.0), ConstantAmp(1.0)) + forcing(Profile("parabola", 1.0), ConstantAmp(1.0))
    G = dual_gram(h, GRID)
    for j, term in enumerate(h.terms):
        assert G[j, j] == pytest.approx(dual_norm(Field(GRID, term.profile.sample(GRID))) ** 2, rel=1e-12)
    assert np.allclose(G, G.T)
    assert dual_norm_sq_at(h, GRID, 0.0) == pytest.approx(dual_norm(Field(GRID, h.sample(GRID, 0.0))) ** 2, rel=1e-12)


@pytest.mark.parametrize("mu, t", [(1.0, 0.0), (5.0, -2.0), (0.3, 1.5)])
def test_constant_forcing_tail_closed_form(mu, t):
    h = forcing(Profile("sine", 1.0), ConstantAmp(3.0))
    r = tail_integral(h, GRID, mu, t)
    expected = 9.0 * SINE_SQ * math.exp(mu * t) / mu
    assert r.value == pytest.approx(expected, rel=1e-12)
    assert r.weighted == pytest.approx(expected * math.exp(-mu * t), rel=1e-12)


@pytest.mark.parametrize("gamma", [-0.4, 0.0, 0.5, 2.0])
def test_exponential_forcing_tail_closed_form(gamma):
    mu = 1.0
    h = forcing(Profile("sine", 1.0), ExponentialAmp(2.0, gamma))
    expected = 4.0 * SINE_SQ * math.exp((mu + 2 * gamma) * -1.0) / (mu + 2 * gamma)
    assert tail_integral(h, GRID, mu, -1.0).value == pytest.approx(expected, rel=1e-12)


def test_divergent_tail_is_reported():
    h = forcing(Profile("sine", 1.0), ExponentialAmp(1.0, -1.0))
    with pytest.raises(DivergentTail):
        tail_integral(h, GRID, 1.5, 0.0)
    with pytest.raises(DivergentTail):
        tail_integral(h, GRID, 1.5, 0.0, method="quadrature")


@pytest.mark.parametrize(
    "amp",
    [
        SumAmp((ExponentialAmp(1.0, 0.5), ConstantAmp(-0.3))),
        BumpAmp(2.0, -3.0, 1.5, rate=0.7),
        SumAmp((BumpAmp(1.0, -5.0, 2.0), ExponentialAmp(0.5, 1.0))),
    ],
)
def test_quadrature_agrees_with_closed_form_within_its_bound(amp):
    h = forcing(Profile("sine", 1.0), amp) + forcing(Profile("parabola", 0.7), ConstantAmp(0.2))
    exact = tail_integral(h, GRID, 2.0, -0.5)
    q = tail_integral(h, GRID, 2.0, -0.5, tol=1e-10, method="quadrature")
    assert abs(q.value - exact.value) <= q.tail_error_bound + 1e-9
    assert q.method != exact.method


def test_interval_integral_is_the_difference_of_tails():
    h = forcing(Profile("sine", 1.0), ExponentialAmp(1.0, 0.3)) + forcing(Profile("parabola", 1.0), BumpAmp(1.0, -2.0, 1.0))
    a, b, mu = -3.0, -0.5, 2.0
    diff = tail_integral(h, GRID, mu, b).value - tail_integral(h, GRID, mu, a).value
    assert interval_integral(h, GRID, mu, a, b) == pytest.approx(diff, rel=1e-10)
    assert interval_integral(h, GRID, mu, a, b, weighted=True) == pytest.approx(diff * math.exp(-mu * b), rel=1e-10)
    assert interval_integral(h, GRID, mu, b, a) == 0.0


@settings(max_examples=50)
@given(
    c=st.floats(-3, 3),
    left=st.floats(-6, 1),
    width=st.floats(0.1, 3),
    rate=st.floats(-2, 2),
    a=st.floats(-8, 0),
    span=st.floats(0.01, 6),
    shift=st.floats(-1, 1),
)
def test_amplitude_integral_matches_quadrature(c, left, width, rate, a, span, shift):
    amp = BumpAmp(c, left, width, rate)
    b = a + span
    lo, hi = max(a, left), min(b, left + width)
    ref = quad(lambda s: math.exp(shift * s) * amp(s), lo, hi)[0] if lo < hi else 0.0
    assert amplitude_integral(amp, a, b, shift) == pytest.approx(ref, rel=1e-8, abs=1e-12)


def test_gronwall_bound_reduces_to_pure_decay_without_forcing():
    spec = ProblemSpec(ConstantViscosity(1.0), OddPower(1.0, 2), ZERO_FORCING, WEIGHT)
    mu = first_eigenvalue(GRID)
    assert gronwall_bound(spec, GRID, mu, 2.0, 0.0, 0.5) == pytest.approx(2.0 * math.exp(-0.5 * mu))
    with pytest.raises(ValueError):
        gronwall_bound(spec, GRID, mu, 2.0, 0.0, -0.5)


def test_gronwall_bound_terms_with_forcing_and_kappa():
    spec = ProblemSpec(ConstantViscosity(2.0), OddPowerPlusBounded(1.0, 4, 1.0), forcing(Profile("sine", 1.0), ConstantAmp(1.0)), WEIGHT)
    lam1 = first_eigenvalue(GRID)
    mu = lam1
    kappa = spec.kappa
    forcing_part = SINE_SQ * (1 - math.exp(-mu)) / mu / (2 * (2.0 - mu / (2 * lam1)))
    expected = 3.0 * math.exp(-mu) + 2 * kappa / mu + forcing_part
    assert gronwall_bound(spec, GRID, mu, 3.0, -1.0, 0.0) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("factor", [0.0, -1.0, 2.0, 2.5])
def test_gronwall_bound_rejects_mu_outside_the_open_interval(factor):
    spec = ProblemSpec(ConstantViscosity(1.0), OddPower(1.0, 2), ZERO_FORCING, WEIGHT)
    with pytest.raises(InvalidMu):
        gronwall_bound(spec, GRID, factor * first_eigenvalue(GRID), 1.0, 0.0, 1.0)


def test_absorbing_radius_floor_and_forcing_term():
    spec = ProblemSpec(ConstantViscosity(1.0), OddPowerPlusBounded(1.0, 4, 0.5), forcing(Profile("sine", 1.0), ConstantAmp(2.0)), WEIGHT)
    lam1 = first_eigenvalue(GRID)
    R = absorbing_radius(spec, GRID, lam1)
    assert R.floor_sq == pytest.approx(1 + 2 * spec.kappa / lam1)
    extra = 4.0 * SINE_SQ / lam1 / (2 * (1 - 0.5))
    assert R.squared(-3.0) == pytest.approx(R.floor_sq + extra, rel=1e-12)
    assert R(0.0) == pytest.approx(math.sqrt(R.floor_sq + extra))


def test_absorbing_radius_surfaces_divergence_at_construction():
    spec = ProblemSpec(ConstantViscosity(1.0), OddPower(1.0, 4), forcing(Profile("sine", 1.0), ExponentialAmp(1.0, -10.0)), WEIGHT)
    with pytest.raises(DivergentTail):
        absorbing_radius(spec, GRID, 1.0)


def test_radius_term_is_finite_far_in_the_past():
    h = forcing(Profile("sine", 1.0), ExponentialAmp(1.0, 0.5))
    v = radius_term(h, GRID, 9.0, -800.0, 1.0, first_eigenvalue(GRID))
    assert math.isfinite(v) and 0.0 <= v < 1e-300


def test_envelope_dominates_member_radii():
    fam = nd16_family()
    c0 = envelope_constant(fam, fam.mu_at(LONG[-1]))
    assert c0 == pytest.approx(2.0)
    for tau in (0.0, -1.0, -5.0):
        psi2 = psi_envelope(fam, c0, tau)
        for eta in LONG[len(LONG) // 2 :]:
            assert family_radius(fam, eta).squared(tau) <= psi2


def test_envelope_requires_four_probes():
    with pytest.raises(ValueError):
        psi_envelope(nd16_family(), 2.0, 0.0, eta_probe_set=[0.5, 0.25])
    assert smallest_probes([0.5, 0.1, 0.3, 0.01, 0.2], 2) == [0.01, 0.1]


def test_tempered_membership_verdicts():
    taus = [-float(k) for k in range(0, 40, 4)]
    assert tempered_membership(lambda tau: 3.0, 0.5, taus, 1e-3).passed
    grow = tempered_membership(lambda tau: math.exp(-0.5 * tau), 0.5, taus, 1e-3)
    assert grow.verdict == "fail"
    with pytest.raises(ValueError):
        tempered_membership(lambda tau: 1.0, 1.0, taus[:5], 1e-3)
