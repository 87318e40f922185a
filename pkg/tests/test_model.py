import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from families import LONG, WEIGHT, constant_family, forcing, nd16_family
from pullback_lab.errors import DescriptorError, InvalidMu, UnknownEta
from pullback_lab.grid import Grid1D
from pullback_lab.model import (
    ZERO_FORCING,
    BumpAmp,
    ConstantAmp,
    ConstantViscosity,
    ExponentialAmp,
    OddPower,
    OddPowerPlusBounded,
    OscillatingViscosity,
    PerturbedFamily,
    PiecewiseLinearViscosity,
    ProblemSpec,
    Profile,
    RationalBumpViscosity,
    ScaledAmp,
    SumAmp,
    check_A1,
    instantiate,
    with_certificate,
)


def spec_with(reaction, viscosity=None):
    return ProblemSpec(viscosity or ConstantViscosity(1.0), reaction, ZERO_FORCING, WEIGHT)


# --- viscosities -------------------------------------------------------------


def test_rational_bump_values_and_floor():
    a = RationalBumpViscosity(1.0, 0.5, 0.0, 0.5)
    assert a(0.0) == 1.5
    assert a(0.5) == pytest.approx(1.25)
    assert a.m_floor == 1.0
    assert np.all(a(np.linspace(-100, 100, 1001)) >= 1.0)


def test_piecewise_linear_interpolates_and_extends_flat():
    a = PiecewiseLinearViscosity(((-1.0, 2.0), (0.0, 1.0), (1.0, 3.0)))
    assert a(-0.5) == pytest.approx(1.5)
    assert a(-7.0) == 2.0 and a(9.0) == 3.0
    assert a.m_floor == 1.0


def test_oscillating_viscosity_floor():
    a = OscillatingViscosity(2.0, -0.5, 3.0)
    s = np.linspace(-10, 10, 20001)
    assert a.m_floor == 1.5
    assert a(s).min() == pytest.approx(1.5, abs=1e-6)


@pytest.mark.parametrize(
    "build",
    [
        lambda: ConstantViscosity(0.0),
        lambda: RationalBumpViscosity(1.0, -0.1, 0.0, 1.0),
        lambda: RationalBumpViscosity(1.0, 0.1, 0.0, 0.0),
        lambda: PiecewiseLinearViscosity(((0.0, 1.0), (0.0, 2.0))),
        lambda: PiecewiseLinearViscosity(((0.0, -1.0),)),
        lambda: OscillatingViscosity(1.0, 1.0),
    ],
)
def test_invalid_viscosities_are_rejected(build):
    with pytest.raises(DescriptorError):
        build()


# --- reactions and (A1) ----------------------------------------------------


def test_odd_power_is_odd_with_the_declared_growth():
    f = OddPower(2.0, 4)
    s = np.linspace(-3, 3, 61)
    assert np.allclose(f(-s), -f(s))
    assert f(2.0) == -16.0
    assert f.certificate.q == pytest.approx(4 / 3)


def test_check_A1_passes_for_cubic_damping():
    v = check_A1(spec_with(OddPower(1.0, 4)))
    assert v.passed
    assert {r["inequality"] for r in v.evidence} == {"growth", "dissipativity", "viscosity_floor", "constants"}


def test_check_A1_fails_for_linear_growth():
    # f(s) = s: dissipativity with alpha2 > 0 cannot hold
    v = check_A1(spec_with(with_certificate(OddPower(-1.0, 2), 0.0, 1.0, 0.0, 1.0)))
    assert not v.passed
    row = next(r for r in v.evidence if r["inequality"] == "dissipativity")
    assert not row["holds"]


def test_check_A1_flags_zero_damping_constants():
    v = check_A1(spec_with(OddPower(0.0, 2)))
    assert not v.passed
    assert not next(r for r in v.evidence if r["inequality"] == "constants")["holds"]


def test_check_A1_catches_an_understated_certificate():
    v = check_A1(spec_with(with_certificate(OddPowerPlusBounded(1.0, 4, 2.0, "constant"), 0.0, 1.0, 0.0, 0.5)))
    assert not v.passed


@settings(max_examples=40, deadline=None)
@given(
    alpha=st.floats(0.1, 5.0),
    b=st.floats(-3.0, 3.0),
    p=st.sampled_from([2.0, 3.0, 4.0, 6.0]),
    shape=st.sampled_from(["constant", "sine", "bump"]),
)
def test_canonical_certificate_always_passes_A1(alpha, b, p, shape):
    assert check_A1(spec_with(OddPowerPlusBounded(alpha, p, b, shape)), n_samples=801).passed


def test_reaction_exponent_below_two_is_rejected():
    with pytest.raises(DescriptorError):
        OddPower(1.0, 1.5)


# --- temporal amplitudes and forcing --------------------------------------


def test_bump_amplitude_is_a_windowed_exponential():
    b = BumpAmp(2.0, -3.0, 1.0, rate=0.5)
    assert b(-2.5) == pytest.approx(2.0 * math.exp(-1.25))
    assert b(-3.5) == 0.0 and b(0.0) == 0.0
    assert b.support() == (-3.0, -2.0)


def test_far_outside_support_evaluation_does_not_overflow():
    b = BumpAmp(1.0, -1e6, 1.0, rate=-50.0)
    with np.errstate(all="raise"):
        assert b(0.0) == 0.0


@settings(max_examples=60)
@given(
    c=st.floats(-5, 5),
    gamma=st.floats(-2, 2),
    left=st.floats(-20, 5),
    width=st.floats(0.1, 5),
    rate=st.floats(-2, 2),
    t=st.floats(-40, 0),
)
def test_tail_bound_majorises_the_amplitude(c, gamma, left, width, rate, t):
    amp = SumAmp((ExponentialAmp(c, gamma), BumpAmp(1.0, left, width, rate), ScaledAmp(ConstantAmp(0.5), -2.0)))
    C, rho = amp.tail_bound()
    assert abs(amp(t)) <= C * math.exp(rho * t) * (1 + 1e-12) + 1e-300


def test_forcing_must_vanish_on_the_boundary():
    with pytest.raises(DescriptorError):
        ProblemSpec(ConstantViscosity(1.0), OddPower(1.0, 4), forcing(Profile("uniform", 1.0), ConstantAmp(1.0)), WEIGHT)


def test_forcing_algebra():
    g = Grid1D(1.0, 15)
    h = forcing(Profile("sine", 2.0), ExponentialAmp(1.0, 0.5))
    k = forcing(Profile("parabola", 1.0), ConstantAmp(3.0))
    s = h + k.scaled(-1.0)
    assert np.allclose(s.sample(g, -1.0), h.sample(g, -1.0) - k.sample(g, -1.0))
    assert h.minus(h).sample(g, 0.3) == pytest.approx(np.zeros(15))
    assert ZERO_FORCING.is_zero and not h.is_zero


def test_parabola_profile_peaks_at_the_midpoint():
    p = Profile("parabola", 1.0)
    assert p.evaluate(np.array([0.5]), 1.0)[0] == pytest.approx(1.0)
    assert p.vanishes_on_boundary(1.0)


# --- families ---------------------------------------------------------------


def test_family_instantiation_and_limit():
    fam = nd16_family()
    assert instantiate(fam, 0.0) is fam.limit_spec
    assert instantiate(fam, LONG[3]).forcing.sample(fam.grid, 0.0).max() > 0
    with pytest.raises(UnknownEta):
        instantiate(fam, 0.3)


def test_family_constants():
    fam = constant_family()
    assert fam.m == 1.0 and fam.kappa == 0.0
    assert fam.mu_ceiling == pytest.approx(2.0 * fam.lam1)
    assert fam.mu_at(0.0) == 9.0


@pytest.mark.parametrize("schedule", [(), (0.5, 0.5), (0.25, 0.5), (1.5, 0.5), (0.5, 0.0)])
def test_family_schedule_validation(schedule):
    fam = nd16_family()
    with pytest.raises(DescriptorError):
        PerturbedFamily(fam.builder, schedule, fam.limit_spec, fam.grid, fam.mu_rule)


@pytest.mark.parametrize("factor", [0.0, 2.0, 3.0])
def test_mu_outside_open_interval_is_rejected(factor):
    fam = nd16_family()
    with pytest.raises(InvalidMu):
        PerturbedFamily(fam.builder, (0.5,), fam.limit_spec, fam.grid, lambda e, m, l: factor * m * l)


def test_limit_exponent_is_validated():
    fam = nd16_family()
    with pytest.raises(InvalidMu):
        PerturbedFamily(fam.builder, (0.5,), fam.limit_spec, fam.grid, fam.mu_rule, mu0=2.0 * fam.mu_ceiling)
