"""Sectioned ``key = value`` run configurations and the descriptor expression language.

Descriptor values are small Python-like expressions such as
``sine(4.0) * constant(eta)`` or ``rational_bump(1.0, 0.5 * eta, 0.0, 0.5)``.
They are evaluated by a whitelist interpreter over the syntax tree; no
``eval`` is involved.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Any

from .errors import DescriptorError, InvalidMu, ParseError, ValidationError
from .grid import Grid1D, first_eigenvalue
from .model import (
    ZERO_FORCING,
    BumpAmp,
    ConstantAmp,
    ConstantViscosity,
    ExponentialAmp,
    ForcingDesc,
    ForcingTerm,
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
    WeightDesc,
    _Temporal,
    with_certificate,
)

__all__ = ["RunConfig", "SCHEMA", "EXPERIMENTS", "parse_config", "emit_config", "evaluate", "build_family"]

EXPERIMENTS = (
    "energy-audit",
    "gronwall",
    "absorbing",
    "conditions",
    "attractor",
    "robustness",
    "finite-time",
    "noncommutation",
    "heat-convergence",
)

# section -> key -> (kind, default); kinds: float, int, str, bool, expr, floats
SCHEMA: dict[str, dict[str, tuple[str, Any]]] = {
    "grid": {"L": ("float", 1.0), "n": ("int", 127)},
    "time": {
        "dt": ("float", 1e-3),
        "ceiling": ("float", 1e8),
        "retries": ("int", 6),
        "tau": ("float", -1.0),
        "t_end": ("float", 0.0),
    },
    "family": {
        "scenario": ("str", None),
        "label": ("str", "family"),
        "viscosity": ("expr", "constant_visc(1.0)"),
        "reaction": ("expr", "odd_power(1.0, 4)"),
        "forcing": ("expr", "zero"),
        "weight": ("expr", "sine(1.0)"),
        "viscosity_limit": ("expr", None),
        "reaction_limit": ("expr", None),
        "forcing_limit": ("expr", None),
        "weight_limit": ("expr", None),
        "mu": ("expr", "m * lam1"),
        "mu0": ("expr", None),
        "eta_schedule": ("floats", (0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625)),
    },
    "experiment": {
        "name": ("str", "energy-audit"),
        "tol": ("float", 1e-6),
        "gate_tol": ("float", 1e-3),
        "energy_tol": ("float", 1e-10),
        "t": ("float", 0.0),
        "cloud_size": ("int", 33),
        "n_modes": ("int", 8),
        "n_pullback": ("int", 12),
        "n_probes": ("int", 16),
        "decay_factor": ("float", 0.05),
        "override_gates": ("bool", False),
        "initial": ("expr", "sine(1.0)"),
        "checkpoints": ("floats", (0.25, 0.5, 0.75, 1.0)),
        "seed": ("int", 0),
        "output": ("str", "runs"),
    },
}

_POSITIVE = {("experiment", k) for k in ("tol", "gate_tol", "energy_tol", "decay_factor")} | {
    ("time", "dt"),
    ("time", "ceiling"),
    ("grid", "L"),
}


# ---------------------------------------------------------------------------
# expression language


def _forcing(profile: Profile, amp) -> ForcingDesc:
    return ForcingDesc((ForcingTerm(profile, amp),))


def _piecewise(*points):
    if len(points) == 1 and isinstance(points[0], (list, tuple)) and points[0] and isinstance(points[0][0], (list, tuple)):
        points = points[0]
    return PiecewiseLinearViscosity(tuple(tuple(p) for p in points))


CONSTRUCTORS = {
    "constant_visc": ConstantViscosity,
    "rational_bump": RationalBumpViscosity,
    "piecewise_linear": _piecewise,
    "oscillating": OscillatingViscosity,
    "odd_power": OddPower,
    "odd_power_plus_bounded": OddPowerPlusBounded,
    "with_certificate": with_certificate,
    "sine": lambda amplitude=1.0, mode=1: Profile("sine", amplitude, int(mode)),
    "parabola": lambda amplitude=1.0: Profile("parabola", amplitude),
    "uniform": lambda amplitude=1.0: Profile("uniform", amplitude),
    "constant": ConstantAmp,
    "exponential": ExponentialAmp,
    "bump": BumpAmp,
    "scaled": ScaledAmp,
}


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _mul(a, b):
    if _is_num(a) and _is_num(b):
        return a * b
    if _is_num(b):
        a, b = b, a
    if _is_num(a):
        if isinstance(b, _Temporal):
            return ScaledAmp(b, float(a))
        if isinstance(b, ForcingDesc):
            return b.scaled(float(a))
        if isinstance(b, Profile):
            return Profile(b.kind, b.amplitude * a, b.mode)
    if isinstance(a, _Temporal) and isinstance(b, Profile):
        a, b = b, a
    if isinstance(a, Profile) and isinstance(b, _Temporal):
        return _forcing(a, b)
    raise TypeError(f"cannot multiply {type(a).__name__} by {type(b).__name__}")


def _add(a, b):
    if _is_num(a) and _is_num(b):
        return a + b
    if isinstance(a, ForcingDesc) and isinstance(b, ForcingDesc):
        return a + b
    if isinstance(a, _Temporal) and isinstance(b, _Temporal):
        return SumAmp((a, b))
    if isinstance(a, Profile):
        a = _forcing(a, ConstantAmp(1.0))
    if isinstance(b, Profile):
        b = _forcing(b, ConstantAmp(1.0))
    if isinstance(a, ForcingDesc) and isinstance(b, ForcingDesc):
        return a + b
    raise TypeError(f"cannot add {type(a).__name__} and {type(b).__name__}")


def _neg(a):
    return -a if _is_num(a) else _mul(-1.0, a)


def evaluate(text: str, env: dict[str, float]) -> Any:
    """Evaluate a descriptor expression with the numeric names in ``env``."""
    tree = ast.parse(text.strip(), mode="eval")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, str)) and not isinstance(node.value, bool):
            return node.value
        if isinstance(node, (ast.List, ast.Tuple)):
            return tuple(ev(e) for e in node.elts)
        if isinstance(node, ast.Name):
            if node.id == "zero":
                return ZERO_FORCING
            if node.id == "pi":
                return math.pi
            if node.id in env:
                return env[node.id]
            raise NameError(f"unknown name {node.id!r}")
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return _neg(v) if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp):
            a, b = ev(node.left), ev(node.right)
            if isinstance(node.op, ast.Mult):
                return _mul(a, b)
            if isinstance(node.op, ast.Add):
                return _add(a, b)
            if isinstance(node.op, ast.Sub):
                return _add(a, _neg(b))
            if isinstance(node.op, ast.Div):
                if not (_is_num(a) and _is_num(b)):
                    raise TypeError("division needs numbers")
                return a / b
            if isinstance(node.op, ast.Pow):
                if not (_is_num(a) and _is_num(b)):
                    raise TypeError("powers need numbers")
                return a**b
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in CONSTRUCTORS:
            args = [ev(a) for a in node.args]
            kwargs = {k.arg: ev(k.value) for k in node.keywords if k.arg is not None}
            return CONSTRUCTORS[node.func.id](*args, **kwargs)
        raise ValueError(f"unsupported syntax: {ast.dump(node)[:60]}")

    return ev(tree)


def _normalize_expr(text: str) -> str:
    return ast.unparse(ast.parse(text.strip(), mode="eval"))


# ---------------------------------------------------------------------------
# config


@dataclass
class RunConfig:
    """Typed values per section; ``lines`` remembers where each key came from."""

    grid: dict
    time: dict
    family: dict
    experiment: dict
    lines: dict = field(default_factory=dict, compare=False)

    def section(self, name: str) -> dict:
        return getattr(self, name)

    def make_grid(self) -> Grid1D:
        return Grid1D(self.grid["L"], self.grid["n"])


def _convert(kind: str, raw: str):
    raw = raw.strip()
    if kind == "float":
        return float(raw)
    if kind == "int":
        v = float(raw)
        if v != int(v):
            raise ValueError(f"{raw!r} is not an integer")
        return int(v)
    if kind == "bool":
        low = raw.lower()
        if low not in ("true", "false", "yes", "no", "1", "0"):
            raise ValueError(f"{raw!r} is not a boolean")
        return low in ("true", "yes", "1")
    if kind == "floats":
        return tuple(float(x) for x in raw.replace(",", " ").split())
    if kind == "expr":
        return _normalize_expr(raw)
    return raw


def _tokenize(text: str):
    """Yield ``(line_no, section, key, raw_value)``."""
    section = None
    for no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                raise ParseError(no, body, "unterminated section header")
            section = body[1:-1].strip()
            if section not in SCHEMA:
                raise ParseError(no, section, f"unknown section; expected one of {', '.join(SCHEMA)}")
            continue
        if "=" not in body:
            raise ParseError(no, body, "expected 'key = value'")
        if section is None:
            raise ParseError(no, body, "key outside any section")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in SCHEMA[section]:
            raise ParseError(no, key, f"unknown key in [{section}]")
        yield no, section, key, raw


def parse_config(text: str) -> RunConfig:
    """Parse and validate; raises :class:`ParseError` or :class:`ValidationError`."""
    from .scenarios import SCENARIOS

    raw: dict[str, dict[str, tuple[int, str]]] = {s: {} for s in SCHEMA}
    for no, section, key, value in _tokenize(text):
        if key in raw[section]:
            raise ParseError(no, key, f"duplicate key (first set on line {raw[section][key][0]})")
        raw[section][key] = (no, value)

    scen = raw["family"].get("scenario")
    if scen is not None:
        name = scen[1].strip()
        if name not in SCENARIOS:
            raise ParseError(scen[0], "scenario", f"unknown scenario {name!r}")
        for section, items in SCENARIOS[name].values.items():
            for key, value in items.items():
                raw[section].setdefault(key, (scen[0], value))

    typed: dict[str, dict] = {}
    lines: dict[tuple[str, str], int] = {}
    for section, keys in SCHEMA.items():
        typed[section] = {}
        for key, (kind, default) in keys.items():
            if key in raw[section]:
                no, value = raw[section][key]
                try:
                    typed[section][key] = _convert(kind, value)
                except (ValueError, SyntaxError) as exc:
                    raise ParseError(no, key, str(exc)) from None
                lines[(section, key)] = no
            else:
                typed[section][key] = default
                lines[(section, key)] = 0
    cfg = RunConfig(typed["grid"], typed["time"], typed["family"], typed["experiment"], lines)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    problems = []

    def line(section, key):
        return cfg.lines.get((section, key), 0)

    for section, key in sorted(_POSITIVE):
        v = cfg.section(section)[key]
        if not (math.isfinite(v) and v > 0):
            problems.append((line(section, key), key, f"must be positive, got {v!r}"))
    if cfg.grid["n"] < 3:
        problems.append((line("grid", "n"), "n", "need at least 3 interior nodes"))
    if cfg.time["retries"] < 0:
        problems.append((line("time", "retries"), "retries", "must be nonnegative"))
    if cfg.experiment["name"] not in EXPERIMENTS:
        problems.append((line("experiment", "name"), "name", f"unknown experiment; expected one of {', '.join(EXPERIMENTS)}"))
    if cfg.experiment["cloud_size"] < 2:
        problems.append((line("experiment", "cloud_size"), "cloud_size", "must be at least 2"))
    if not cfg.time["t_end"] > cfg.time["tau"]:
        problems.append((line("time", "t_end"), "t_end", "must exceed tau"))
    if problems:
        raise ValidationError(problems)
    try:
        build_family(cfg)
    except InvalidMu as exc:
        key = "mu0" if "mu0" in str(exc) else "mu"
        problems.append((line("family", key), key, f"{exc}; mu must lie in the open interval (0, 2 m lam1)"))
    except (DescriptorError, TypeError, ValueError, NameError, ZeroDivisionError) as exc:
        problems.append((line("family", "eta_schedule"), "family", f"{type(exc).__name__}: {exc}"))
    if problems:
        raise ValidationError(problems)


def _fmt_value(kind: str, v) -> str:
    if kind == "float":
        return repr(float(v))
    if kind == "bool":
        return "true" if v else "false"
    if kind == "floats":
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def emit_config(cfg: RunConfig) -> str:
    """Canonical text form; ``parse_config(emit_config(c)) == c``."""
    out = []
    for section, keys in SCHEMA.items():
        out.append(f"[{section}]")
        for key, (kind, _) in keys.items():
            v = cfg.section(section)[key]
            if v is None:
                continue
            out.append(f"{key} = {_fmt_value(kind, v)}")
        out.append("")
    return "\n".join(out)


# ---------------------------------------------------------------------------
# family construction


def _spec(cfg: RunConfig, env: dict, limit: bool) -> ProblemSpec:
    fam = cfg.family
    parts = {}
    for key in ("viscosity", "reaction", "forcing", "weight"):
        text = fam[f"{key}_limit"] if limit and fam[f"{key}_limit"] is not None else fam[key]
        parts[key] = evaluate(text, env)
    weight = parts["weight"]
    if isinstance(weight, Profile):
        weight = WeightDesc(weight)
    forcing = parts["forcing"]
    if isinstance(forcing, Profile):
        forcing = _forcing(forcing, ConstantAmp(1.0))
    return ProblemSpec(parts["viscosity"], parts["reaction"], forcing, weight, cfg.grid["L"])


def build_family(cfg: RunConfig) -> PerturbedFamily:
    grid = cfg.make_grid()
    lam1 = first_eigenvalue(grid)
    fam = cfg.family

    def builder(eta: float) -> ProblemSpec:
        return _spec(cfg, {"eta": eta, "lam1": lam1}, limit=False)

    limit = _spec(cfg, {"eta": 0.0, "lam1": lam1}, limit=True)

    def mu_rule(eta, m, l1):
        return float(evaluate(fam["mu"], {"eta": eta, "m": m, "lam1": l1}))

    mu0 = None
    if fam["mu0"] is not None:
        m_lim = min([limit.m] + [builder(e).m for e in fam["eta_schedule"]])
        mu0 = float(evaluate(fam["mu0"], {"eta": 0.0, "m": m_lim, "lam1": lam1}))
    label = fam["scenario"] or fam["label"]
    return PerturbedFamily(builder, tuple(fam["eta_schedule"]), limit, grid, mu_rule, mu0=mu0, label=label)
