"""Built-in scenario registry.

Each scenario is a set of default ``key = value`` entries, per section, that a
config file can pull in with ``scenario = <name>`` and then override.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["Scenario", "SCENARIOS", "list_scenarios", "default_config_text"]


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    values: dict


_HALVINGS = "0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625"

SCENARIOS: dict[str, Scenario] = {}


def _register(name, description, **sections):
    SCENARIOS[name] = Scenario(name, description, sections)


_register(
    "nd16_autonomous",
    "autonomous limit: forcing eta * 4 sin(pi x), fixed nonlocal viscosity and cubic damping",
    grid={"L": "1.0", "n": "128"},
    time={"dt": "0.002", "tau": "-1.0", "t_end": "0.0"},
    family={
        "viscosity": "rational_bump(1.0, 0.5, 0.0, 0.5)",
        "reaction": "odd_power(1.0, 4)",
        "forcing": "sine(4.0) * constant(eta)",
        "forcing_limit": "zero",
        "weight": "sine(1.0)",
        "mu": "m * lam1",
        "eta_schedule": _HALVINGS,
    },
    experiment={"name": "robustness", "cloud_size": "65", "tol": "1e-6"},
)

_register(
    "nonautonomous_limit",
    "time-dependent limit forcing 2 sin(pi x) e^{t/2}; viscosity, reaction and forcing all perturbed in eta",
    grid={"L": "1.0", "n": "128"},
    time={"dt": "0.002", "tau": "-1.0", "t_end": "0.0"},
    family={
        "viscosity": "rational_bump(1.0, 0.5 * eta, 0.0, 0.5)",
        "reaction": "odd_power_plus_bounded(1.0, 4, 0.5 * eta, 'sine')",
        "forcing": "sine(2.0) * exponential(1.0, 0.5) + parabola(eta) * constant(1.0)",
        "forcing_limit": "sine(2.0) * exponential(1.0, 0.5)",
        "weight": "sine(1.0)",
        "mu": "m * lam1",
        "mu0": "m * lam1",
        "eta_schedule": _HALVINGS,
    },
    experiment={"name": "robustness", "cloud_size": "65", "tol": "1e-6"},
)

_register(
    "moving_bump_counterexample",
    "unit-mass forcing pulse drifting to -infinity as eta -> 0; the iterated limits do not commute",
    grid={"L": "1.0", "n": "63"},
    time={"dt": "0.002", "tau": "-1.0", "t_end": "0.0"},
    family={
        "viscosity": "constant_visc(1.0)",
        "reaction": "odd_power(1.0, 4)",
        "forcing": "sine(1.0) * bump(1.0, -1 / eta - 1, 1.0, -0.5 * lam1)",
        "forcing_limit": "zero",
        "weight": "sine(1.0)",
        "mu": "m * lam1",
        "mu0": "m * lam1",
        "eta_schedule": _HALVINGS,
    },
    experiment={"name": "noncommutation"},
)

_register(
    "heat_benchmark",
    "linear heat equation on (0, 1) from sin(pi x); exact decay e^{-pi^2 t}",
    grid={"L": "1.0", "n": "127"},
    time={"dt": "0.0001", "tau": "0.0", "t_end": "0.5"},
    family={
        "viscosity": "constant_visc(1.0)",
        "reaction": "odd_power(0.0, 2)",
        "forcing": "zero",
        "weight": "sine(1.0)",
        "mu": "m * lam1",
        "eta_schedule": "1.0",
    },
    experiment={"name": "heat-convergence", "initial": "sine(1.0)"},
)

_register(
    "linear_decay",
    "linear damping f(u) = -u with unit viscosity and no forcing; every solution decays to zero",
    grid={"L": "1.0", "n": "63"},
    time={"dt": "0.001", "tau": "0.0", "t_end": "1.0"},
    family={
        "viscosity": "constant_visc(1.0)",
        "reaction": "odd_power(1.0, 2)",
        "forcing": "zero",
        "weight": "sine(1.0)",
        "mu": "m * lam1",
        "eta_schedule": "1.0",
    },
    experiment={"name": "gronwall", "initial": "sine(2.0) + sine(1.0, 3)"},
)


def list_scenarios() -> list[tuple[str, str]]:
    """``(name, description)`` pairs in registration order."""
    return [(s.name, s.description) for s in SCENARIOS.values()]


def default_config_text(name: str) -> str:
    """Fully expanded canonical config for a scenario."""
    from .config import emit_config, parse_config

    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}")
    return emit_config(parse_config(f"[family]\nscenario = {name}\n"))
