"""End-to-end acceptance checks; each test records one pass/fail line in the terminal summary."""

import math
import time

import numpy as np
import pytest

from pullback_lab.attractor import finite_time_convergence_experiment, robustness_experiment
from pullback_lab.conditions import (
    check_A2,
    check_A3,
    check_A4,
    check_A5,
    mu_limits,
    noncommutation_demo,
    sufficient_condition_report,
)
from pullback_lab.config import build_family, parse_config
from pullback_lab.grid import Field, Grid1D, dual_norm
from pullback_lab.model import ZERO_FORCING, ConstantViscosity, OddPower, ProblemSpec, check_A1, with_certificate
from pullback_lab.runner import _orders, heat_convergence, run_config
from pullback_lab.scenarios import SCENARIOS, default_config_text

from families import (
    WEIGHT,
    constant_family,
    exponential_forcing_family,
    fixed_bump_reaction_family,
    linear_forced_family,
    moving_bump_family,
    nd16_family,
    scaled_mu_family,
)

ROBUST_SCENARIOS = ("nd16_autonomous", "nonautonomous_limit")


def scenario_config(name, **overrides):
    text = default_config_text(name)
    for section, entries in overrides.items():
        extra = "".join(f"{k} = {v}\n" for k, v in entries.items())
        text = text.replace(f"[{section}]\n", f"[{section}]\n{extra}", 1)
        text = "\n".join(_drop_duplicates(text.splitlines())) + "\n"
    return parse_config(text)


def _drop_duplicates(lines):
    seen, section, out = set(), None, []
    for line in lines:
        if line.startswith("["):
            section = line
        elif "=" in line:
            key = (section, line.split("=", 1)[0].strip())
            if key in seen:
                continue
            seen.add(key)
        out.append(line)
    return out


def _robustness(name):
    cfg = scenario_config(name)
    ex = cfg.experiment
    fam = build_family(cfg)
    start = time.perf_counter()
    rep = robustness_experiment(
        fam, ex["t"], dt=cfg.time["dt"], cloud_size=ex["cloud_size"], tol=ex["tol"], n_modes=ex["n_modes"],
        seed=ex["seed"], n_pullback=ex["n_pullback"], decay_factor=ex["decay_factor"], gate_tol=ex["gate_tol"],
    )
    return fam, rep, time.perf_counter() - start


@pytest.fixture(scope="module")
def robustness_runs():
    return {name: _robustness(name) for name in ROBUST_SCENARIOS}


def test_criterion_1_heat_benchmark(record_criterion):
    start = time.perf_counter()
    spatial, temporal = heat_convergence(127, 1e-4, 0.5)
    elapsed = time.perf_counter() - start
    p_space, p_time = _orders(spatial), _orders(temporal)
    ok = min(p_space) >= 1.9 and min(p_time) >= 0.9 and elapsed < 60.0
    record_criterion(1, ok, f"spatial orders {[round(p, 4) for p in p_space]}, temporal {[round(p, 4) for p in p_time]}, {elapsed:.1f} s")
    assert ok


def test_criterion_2_energy_identity_on_every_scenario(tmp_path, record_criterion):
    worst = []
    for name in SCENARIOS:
        cfg = scenario_config(name, experiment={"name": "energy-audit"})
        res = run_config(cfg, tmp_path)
        worst.append((name, res.passed, [g.detail for g in res.gates if not g.passed]))
    ok = all(p for _, p, _ in worst)
    record_criterion(2, ok, f"{sum(p for _, p, _ in worst)}/{len(worst)} scenarios below 1e-10 relative residual")
    assert ok, worst


def test_criterion_3_gronwall_domination(tmp_path, record_criterion):
    start = time.perf_counter()
    results = {}
    for name in ("linear_decay", "nonautonomous_limit"):
        res = run_config(scenario_config(name, experiment={"name": "gronwall"}), tmp_path)
        results[name] = res.passed
    elapsed = time.perf_counter() - start
    ok = all(results.values()) and elapsed < 120.0
    record_criterion(3, ok, f"{results}, {elapsed:.1f} s")
    assert ok


def test_criterion_4_absorbing_inclusion(robustness_runs, record_criterion):
    checked, bad = 0, []
    for name, (_, rep, _) in robustness_runs.items():
        clouds = dict(rep.clouds)
        clouds[0.0] = rep.limit_cloud
        for eta, cloud in clouds.items():
            R = math.sqrt(rep.radii_sq[eta])
            checked += len(cloud)
            over = cloud.norms() > R + 1e-9
            if over.any():
                bad.append((name, eta, float(cloud.norms().max()), R))
    ok = checked > 0 and not bad
    record_criterion(4, ok, f"{checked} points checked, {len(bad)} clouds outside their ball")
    assert ok, bad


@pytest.mark.parametrize("name", ROBUST_SCENARIOS)
def test_criterion_5_robustness(name, robustness_runs, record_criterion):
    fam, rep, elapsed = robustness_runs[name]
    d = rep.distances
    assert fam.grid.n == 128 and len(rep.limit_cloud) <= 65
    assert rep.schedule == tuple(2.0**-k for k in range(1, 7))
    tail = d[len(d) // 2 :]
    nonincreasing = all(b <= a for a, b in zip(tail, tail[1:]))
    decays = d[-1] <= 0.05 * max(d[0], rep.tol)
    ok = nonincreasing and decays and rep.passed and elapsed < 900.0
    prev = getattr(test_criterion_5_robustness, "_results", {})
    prev[name] = (ok, f"{name}: d(1/64)/d(1/2) = {d[-1] / max(d[0], rep.tol):.4f}, {elapsed:.1f} s")
    test_criterion_5_robustness._results = prev
    record_criterion(5, all(v[0] for v in prev.values()), "; ".join(v[1] for v in prev.values()))
    assert ok, rep.report()


def test_criterion_6_finite_time_convergence(record_criterion):
    fam = linear_forced_family()
    grid = fam.grid
    u_tau = Field(grid, np.sin(math.pi * grid.nodes))
    rep = finite_time_convergence_experiment(fam, 0.0, u_tau, [0.25, 0.5, 0.75, 1.0], tuple(2.0**-k for k in range(1, 6)), dt=1e-3)
    resolved = rep.dt_error <= 0.01 * rep.errors[0]
    ok = resolved and abs(rep.slope - 1.0) <= 0.2 and rep.norm_gaps_decrease() and rep.passed
    record_criterion(6, ok, f"slope {rep.slope:.4f}, dt error {rep.dt_error:.3g} vs e(1/2) {rep.errors[0]:.3g}")
    assert ok, rep.notes


def test_criterion_7_noncommutation(record_criterion):
    fam = moving_bump_family()
    res = noncommutation_demo(fam.mu_at(fam.eta_schedule[-1]))
    ok = abs(res.lim_t_limsup_eta - 1.0) <= 1e-6 and abs(res.limsup_eta_lim_t) <= 1e-6
    record_criterion(7, ok, f"lim_t limsup_eta = {res.lim_t_limsup_eta:.3g}, limsup_eta lim_t = {res.limsup_eta_lim_t:.3g}")
    assert ok


def test_criterion_8_dual_norm_oracle(record_criterion):
    grid = Grid1D(1.0, 511).refine()
    errs = []
    for k in (1, 2, 3):
        got = dual_norm(Field(grid, np.sin(k * math.pi * grid.nodes))) ** 2
        errs.append(abs(got - 1.0 / (2 * k * k * math.pi**2)))
    ok = max(errs) <= 1e-6
    record_criterion(8, ok, f"max error {max(errs):.3g} on n = {grid.n}")
    assert ok


def _stage(report, name):
    return next(e["verdict"] for e in report.evidence if e["stage"] == name)


def _a1_spec(reaction):
    return ProblemSpec(ConstantViscosity(1.0), reaction, ZERO_FORCING, WEIGHT)


def test_criterion_9_conditions_matrix(record_criterion):
    nd16, bump = nd16_family(), moving_bump_family()
    cases = [
        ("A1 cubic damping", lambda: check_A1(_a1_spec(OddPower(1.0, 4))).verdict, "pass"),
        ("A1 f(s) = s", lambda: check_A1(_a1_spec(with_certificate(OddPower(-1.0, 2), 0.0, 1.0, 0.0, 1.0))).verdict, "fail"),
        ("A2 bounded forcing", lambda: check_A2(constant_family()).verdict, "pass"),
        ("A2 forcing e^{-6t}", lambda: check_A2(exponential_forcing_family(-6.0)).verdict, "fail"),
        ("A3 eta * sine forcing", lambda: check_A3(nd16).verdict, "pass"),
        ("A3 fixed reaction bump", lambda: check_A3(fixed_bump_reaction_family()).verdict, "fail"),
        ("A4 eta * sine forcing", lambda: check_A4(nd16, "strong-dual").verdict, "pass"),
        ("A5 autonomous limit", lambda: check_A5(nd16, 0.5 * nd16.mu_ceiling).verdict, "pass"),
        ("A5 moving bump, mu0 = mu", lambda: check_A5(bump, bump.mu0).verdict, "fail"),
        ("tail decay at t = 0", lambda: _stage(sufficient_condition_report(nd16), "1056"), "pass"),
        ("uniform tail decay, moving bump", lambda: _stage(sufficient_condition_report(bump), "1152"), "fail"),
        ("exponent floor, mu = eta m lam1", lambda: mu_limits(scaled_mu_family())[1].verdict, "fail"),
    ]
    got = [(label, fn(), want) for label, fn, want in cases]
    wrong = [(label, g, w) for label, g, w in got if g != w]
    ok = not wrong and len(got) == 12
    record_criterion(9, ok, f"{len(got) - len(wrong)}/12 verdicts match")
    assert ok, wrong


def test_criterion_10_determinism(tmp_path, robustness_runs, record_criterion):
    mismatches = []
    for name in ROBUST_SCENARIOS:
        cfg = scenario_config(name)
        a = run_config(cfg, tmp_path / "a")
        b = run_config(cfg, tmp_path / "b")
        csvs = sorted(p.name for p in a.files if p.suffix == ".csv")
        assert csvs
        for f in csvs:
            if (a.directory / f).read_bytes() != (b.directory / f).read_bytes():
                mismatches.append((name, f))
        if (a.directory / "robustness.csv").read_text() != robustness_runs[name][1].to_csv():
            mismatches.append((name, "robustness.csv vs in-process run"))
    ok = not mismatches
    record_criterion(10, ok, f"{len(mismatches)} differing CSV files across repeated runs")
    assert ok, mismatches
