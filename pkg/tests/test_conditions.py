import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from families import (
    LONG,
    WEIGHT,
    constant_family,
    exponential_forcing_family,
    family,
    fixed_bump_reaction_family,
    moving_bump_family,
    nd16_family,
    scaled_mu_family,
)
from pullback_lab.conditions import (
    check_A2,
    check_A3,
    check_A4,
    check_A5,
    default_dictionary,
    mu_limits,
    noncommutation_demo,
    sufficient_condition_report,
)
from pullback_lab.errors import InvalidMu
from pullback_lab.grid import Grid1D, first_eigenvalue
from pullback_lab.model import (
    ZERO_FORCING,
    ConstantViscosity,
    OddPower,
    OscillatingViscosity,
    ProblemSpec,
)


def test_default_dictionary_shape_and_normalisation():
    g = Grid1D(1.0, 31)
    d = default_dictionary(g)
    assert len(d) == 12
    for v in d[8:]:
        assert g.h * float(v @ v) == pytest.approx(1.0)
    again = default_dictionary(g)
    assert all(np.array_equal(a, b) for a, b in zip(d, again))


# --- (A2) ---------------------------------------------------------------------


def test_A2_passes_without_forcing_and_with_bounded_forcing():
    fam = fixed_bump_reaction_family()
    assert check_A2(fam).passed
    assert check_A2(constant_family()).passed


def test_A2_fails_when_the_forcing_decays_too_fast_into_the_past():
    # h ~ e^{gamma s} with 2 gamma + mu < 0: the weighted tail diverges
    v = check_A2(exponential_forcing_family(-6.0))
    assert v.verdict == "fail"
    assert all("DivergentTail" in r["status"] for r in v.evidence)


# --- (A3) ---------------------------------------------------------------------


def test_A3_constant_family_passes_with_zero_evidence():
    v = check_A3(constant_family())
    assert v.passed
    assert all(r[k] == 0.0 for r in v.evidence for k in ("sup_a", "sup_f", "weight_pairing", "forcing_pairing"))


def test_A3_viscosity_perturbation_sup_equals_eta():
    base = ProblemSpec(ConstantViscosity(1.5), OddPower(1.0, 4), ZERO_FORCING, WEIGHT)
    fam = family(lambda eta: ProblemSpec(OscillatingViscosity(1.5, eta, 1.0), OddPower(1.0, 4), ZERO_FORCING, WEIGHT), base)
    v = check_A3(fam, K=10.0, n_samples=20001)
    assert v.passed
    for r in v.evidence:
        assert r["sup_a"] == pytest.approx(r["eta"], rel=1e-6)


def test_A3_fixed_reaction_bump_fails():
    v = check_A3(fixed_bump_reaction_family())
    assert v.verdict == "fail"
    assert len({r["sup_f"] for r in v.evidence}) == 1


def test_A3_needs_four_probes():
    with pytest.raises(ValueError):
        check_A3(nd16_family(), eta_probes=[0.5, 0.25, 0.125])


# --- (A4) ---------------------------------------------------------------------


def test_A4_strong_distance_closed_form():
    fam = nd16_family()
    g = fam.grid
    gsq = 16.0 * 0.5 / first_eigenvalue(g)  # ||4 sin(pi x)||_*^2
    v = check_A4(fam, "strong-dual", window=(-2.0, 0.0))
    assert v.passed
    for r in v.evidence:
        assert r["distance"] == pytest.approx(r["eta"] ** 2 * gsq * 2.0, rel=1e-12)


def test_A4_weak_mode_passes_for_vanishing_perturbation():
    assert check_A4(nd16_family(), "weak-L2").passed


def test_A4_identical_forcing_gives_zeros():
    v = check_A4(constant_family(), "weak-L2")
    assert v.passed and all(r["distance"] == 0.0 for r in v.evidence)


def test_A4_moving_bump_left_of_window_is_vacuous_and_noted():
    v = check_A4(moving_bump_family(), "strong-dual", window=(-1.0, 0.0))
    assert v.passed
    assert any("left of the window" in n for n in v.notes)
    assert all("support" in r for r in v.evidence)


def test_A4_rejects_unknown_mode_and_bad_window():
    with pytest.raises(ValueError):
        check_A4(nd16_family(), "strong")
    with pytest.raises(ValueError):
        check_A4(nd16_family(), window=(0.0, -1.0))


# --- (A5) ---------------------------------------------------------------------


@settings(max_examples=15, deadline=None)
@given(st.floats(0.02, 0.98))
def test_A5_passes_for_nd16_across_the_open_interval(frac):
    fam = nd16_family()
    assert check_A5(fam, frac * fam.mu_ceiling).passed


def test_A5_fails_for_moving_bump_at_equal_exponents():
    fam = moving_bump_family()
    v = check_A5(fam, fam.mu0)
    assert v.verdict == "fail"
    # Q stays at a positive constant: the pulse has unit weighted mass
    qs = [r["Q"] for r in v.evidence]
    assert min(qs) > 0.01 and max(qs) == pytest.approx(min(qs), rel=1e-9)


def test_A5_rejects_mu0_outside_the_open_interval():
    fam = nd16_family()
    with pytest.raises(InvalidMu):
        check_A5(fam, fam.mu_ceiling)
    with pytest.raises(ValueError):
        check_A5(fam, 1.0, t_sequence=[0.0, 1.0])


def test_A5_fast_path_equal_exponents_bounded_scaling():
    v = check_A5(constant_family(), constant_family().mu_at(0.5))
    assert v.passed


# --- exponent limits ----------------------------------------------------------


def test_mu_limits_examples():
    fam = nd16_family()
    lims, v = mu_limits(fam)
    assert lims.lower == lims.upper == pytest.approx(fam.lam1)
    assert v.passed

    c = 5.0
    shifted = family(fam.builder, fam.limit_spec, fam.grid, mu_rule=lambda eta, m, lam1: c + eta)
    lims, _ = mu_limits(shifted)
    tail = LONG[len(LONG) // 2 :]
    assert lims.lower == pytest.approx(c + tail[-1]) and lims.upper == pytest.approx(c + tail[0])

    def alternating(eta, m, lam1):
        return 2.0 if round(-math.log2(eta)) % 2 else 4.0

    lims, _ = mu_limits(family(fam.builder, fam.limit_spec, fam.grid, mu_rule=alternating))
    assert (lims.lower, lims.upper) == (2.0, 4.0)


def test_mu_limits_detects_vanishing_exponents():
    _, v = mu_limits(scaled_mu_family(), tol=1e-2)
    assert v.verdict == "fail"


def test_mu_limits_needs_eight_probes():
    with pytest.raises(ValueError):
        mu_limits(nd16_family(), LONG[:7])


# --- sufficient conditions ---------------------------------------------------


def test_constant_family_satisfies_every_hypothesis():
    fam = constant_family()
    r = sufficient_condition_report(fam)
    assert r.passed and r.details["prop23"] and r.details["prop24"] and r.details["liminf_limsup_prop"]
    mu_bar = r.details["mu_limits"].upper
    assert mu_bar < r.details["recommended_mu0"] < fam.mu_ceiling


def test_nd16_limit_tail_is_zero_and_prop24_holds():
    fam = nd16_family()
    r = sufficient_condition_report(fam)
    assert r.details["prop24"]
    row = next(e for e in r.evidence if e["stage"] == "limsup_equality")
    assert abs(row["value"]) < 1e-6
    # consistency: the Prop. 24 branch implies the direct check passes
    assert check_A5(fam, r.details["limit_mu0"]).passed


def test_moving_bump_fails_uniform_tail_decay_and_flags_noncommutation():
    r = sufficient_condition_report(moving_bump_family())
    stage = {e["stage"]: e["verdict"] for e in r.evidence}
    assert stage["1152"] == "fail"
    assert r.details["noncommutation"]
    assert not r.passed


# --- non-commutation ---------------------------------------------------------


def test_noncommutation_iterated_limits():
    res = noncommutation_demo(3.0)
    assert res.lim_t_limsup_eta == pytest.approx(1.0, abs=1e-12)
    assert res.limsup_eta_lim_t == pytest.approx(0.0, abs=1e-12)
    assert res.as_verdict(1e-6).passed


def test_noncommutation_table_entries():
    mu = 2.0
    res = noncommutation_demo(mu, eta_probes=[0.5, 0.25, 0.125], t_sequence=[0.0, -3.0, -20.0])
    cell = {(r["eta"], r["t"]): r["integral"] for r in res.table}
    # support [-1/eta - 1, -1/eta] lies inside (-inf, 0]: full unit mass
    assert cell[(0.125, 0.0)] == pytest.approx(1.0, rel=1e-12)
    # t left of the support: empty intersection
    assert cell[(0.5, -20.0)] == 0.0
    # t inside the support of eta = 1/2, which is [-3, -2]
    assert cell[(0.5, -3.0)] == 0.0
    mid = noncommutation_demo(mu, eta_probes=[0.5], t_sequence=[-2.5]).table[0]["integral"]
    assert mid == pytest.approx(0.5, rel=1e-12)


def test_noncommutation_requires_positive_mu():
    with pytest.raises(ValueError):
        noncommutation_demo(0.0)
